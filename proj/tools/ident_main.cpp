// Command-line front end: simulate benchmark data, assemble identification
// systems, run the identification pipelines, evaluate reports, and replicate
// the bundled benchmark studies.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "ident/pipeline.hpp"

namespace fs = std::filesystem;
using ident::Json;

namespace {

Json load_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open file: " + path);
    Json j;
    is >> j;
    return j;
}

void write_text(const std::string& path, const std::string& text) {
    if (auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write file: " + path);
    os << text;
}

struct CommonFlags {
    std::string config_path;
    std::string out = "out";
    std::string pipeline;
    std::uint64_t seed = 0;
    bool seed_set = false;
    double noise_percent = -1.0;
    double noise_nsr = -1.0;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "JSON config file");
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--pipeline", f.pipeline, "pipeline name")
        ->check(CLI::IsMember({"ident", "robust_ident", "weak_ident", "gp_ident", "caslr"}));
    cmd->add_option("--seed", f.seed, "rng seed")->each([&f](const std::string&) { f.seed_set = true; });
    cmd->add_option("--noise-percent", f.noise_percent, "noise level as percent of rms");
    cmd->add_option("--noise-nsr", f.noise_nsr, "noise level as sigma_NSR");
}

/// CLI flags override config keys.
Json resolve_config(const CommonFlags& f) {
    Json config = f.config_path.empty() ? Json::object() : load_json(f.config_path);
    if (!f.pipeline.empty()) config["pipeline"] = f.pipeline;
    if (f.seed_set) config["seed"] = f.seed;
    if (f.noise_percent >= 0.0)
        config["noise"] = {{"kind", "percent"}, {"level", f.noise_percent / 100.0}};
    if (f.noise_nsr >= 0.0) config["noise"] = {{"kind", "nsr"}, {"level", f.noise_nsr}};
    return config;
}

int run_and_write(const Json& config, const std::string& outdir) {
    Json report = ident::run_pipeline(config);
    fs::create_directories(outdir);
    write_text((fs::path(outdir) / "report.json").string(), report.dump(2) + "\n");
    ident::emit_plots(report, outdir);
    std::cout << "chosen support: " << report["chosen"]["support"].dump() << "\n";
    std::cout << "report: " << (fs::path(outdir) / "report.json").string() << "\n";
    return report["flags"].empty() ? 0 : 2;
}

Json replicate_config(const std::string& table) {
    Json c;
    if (table == "table1") {
        c["pipeline"] = "ident";
        c["simulate"] = {{"pde", "burgers"}};
        c["dictionary"] = {{"style", "weak"}, {"max_alpha", 2}, {"max_beta", 3}};
        c["noise"] = {{"kind", "percent"}, {"level", 0.08}};
        c["smoother"] = {{"kind", "lsma"}};
    } else if (table == "table2") {
        c["pipeline"] = "weak_ident";
        c["simulate"] = {{"pde", "burgers"}};
        c["dictionary"] = {{"style", "weak"}, {"max_alpha", 2}, {"max_beta", 3}};
        c["noise"] = {{"kind", "percent"}, {"level", 0.04}};
    } else if (table == "table3") {
        c["pipeline"] = "robust_ident";
        c["simulate"] = {{"pde", "viscous_burgers"}};
        c["dictionary"] = {{"style", "weak"}, {"max_alpha", 2}, {"max_beta", 3}};
        c["noise"] = {{"kind", "percent"}, {"level", 0.05}};
        c["smoother"] = {{"kind", "mls"}};
    } else if (table == "table4") {
        c["pipeline"] = "weak_ident";
        c["simulate"] = {{"pde", "kdv"}};
        c["dictionary"] = {{"style", "weak"}, {"max_alpha", 3}, {"max_beta", 3}};
    } else {
        throw std::runtime_error("unknown replication target: " + table +
                                 " (expected table1..table4)");
    }
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PDE identification from a single noisy spatiotemporal observation"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "generate benchmark data as a field CSV");
    std::string sim_pde = "burgers", sim_out = "data.csv", sim_boundary = "periodic";
    int sim_nx = 0, sim_nt = 0;
    double sim_t1 = -1.0, sim_noise_percent = -1.0, sim_noise_nsr = -1.0;
    std::uint64_t sim_seed = 0;
    sim->add_option("--pde", sim_pde, "benchmark pde")
        ->check(CLI::IsMember(
            {"burgers", "viscous_burgers", "transport", "kdv", "ks", "varying_advection"}));
    sim->add_option("--nx", sim_nx, "spatial samples");
    sim->add_option("--nt", sim_nt, "time samples");
    sim->add_option("--t1", sim_t1, "final time");
    sim->add_option("--boundary", sim_boundary)->check(CLI::IsMember({"periodic", "dirichlet"}));
    sim->add_option("--noise-percent", sim_noise_percent, "noise as percent of rms");
    sim->add_option("--noise-nsr", sim_noise_nsr, "noise as sigma_NSR");
    sim->add_option("--seed", sim_seed, "noise seed");
    sim->add_option("--out", sim_out, "output CSV path");

    // assemble
    auto* asm_cmd = app.add_subcommand("assemble", "build and dump the identification system");
    std::string asm_data, asm_form = "weak", asm_out = "system.csv";
    int asm_alpha = 3, asm_beta = 3, asm_mx = 0, asm_mt = 0, asm_px = 0, asm_pt = 2;
    asm_cmd->add_option("--data", asm_data, "field CSV path")->required();
    asm_cmd->add_option("--form", asm_form)->check(CLI::IsMember({"weak", "fd"}));
    asm_cmd->add_option("--dict-alpha", asm_alpha, "max derivative order");
    asm_cmd->add_option("--dict-beta", asm_beta, "max power");
    asm_cmd->add_option("--mx", asm_mx, "test function half-width in x");
    asm_cmd->add_option("--mt", asm_mt, "test function half-width in t");
    asm_cmd->add_option("--px", asm_px, "test function order in x");
    asm_cmd->add_option("--pt", asm_pt, "test function order in t");
    asm_cmd->add_option("--out", asm_out, "system dump path");

    // identify
    auto* idf = app.add_subcommand("identify", "run an identification pipeline");
    CommonFlags idf_flags;
    std::string idf_data;
    add_common(idf, idf_flags);
    idf->add_option("--data", idf_data, "field CSV path (overrides config)");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "score a report against known coefficients");
    std::string ev_report, ev_truth;
    ev->add_option("--report", ev_report, "report.json path")->required();
    ev->add_option("--truth", ev_truth, "truth JSON path with a coeffs map")->required();

    // replicate
    auto* rep = app.add_subcommand("replicate", "run a bundled benchmark configuration");
    std::string rep_table;
    CommonFlags rep_flags;
    rep->add_option("table", rep_table, "table1|table2|table3|table4")->required();
    add_common(rep, rep_flags);

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) {
            Json s = ident::default_simulate_config(sim_pde);
            if (sim_nx > 0) s["nx"] = sim_nx;
            if (sim_nt > 0) s["nt"] = sim_nt;
            if (sim_t1 > 0.0) s["t1"] = sim_t1;
            s["boundary"] = sim_boundary;
            ident::Field f = ident::simulate_from_config(s);
            if (sim_noise_percent >= 0.0)
                f = ident::add_gaussian_noise(
                    f, ident::NoiseSpec(ident::NoiseKind::PercentOfRms, sim_noise_percent / 100.0,
                                        sim_seed));
            else if (sim_noise_nsr >= 0.0)
                f = ident::add_gaussian_noise(
                    f, ident::NoiseSpec(ident::NoiseKind::NsrOfCenteredRms, sim_noise_nsr,
                                        sim_seed));
            ident::write_field_csv(f, sim_out);
            std::cout << "wrote " << sim_out << "\n";
            return 0;
        }
        if (asm_cmd->parsed()) {
            ident::Field f = ident::read_field_csv(asm_data);
            ident::LinearSystem sys;
            if (asm_form == "weak") {
                ident::Dictionary dict = ident::build_dictionary(
                    asm_alpha, asm_beta, ident::DictionaryStyle::WeakForm);
                ident::TestFunction tf(asm_mx > 0 ? asm_mx : std::max(3, f.grid.nx / 16),
                                       asm_mt > 0 ? asm_mt : std::max(2, f.grid.nt / 16),
                                       asm_px > 0 ? asm_px : asm_alpha + 2, asm_pt);
                sys = ident::assemble_weak(f, dict, tf);
            } else {
                ident::Dictionary dict = ident::build_dictionary(
                    asm_alpha, asm_beta, ident::DictionaryStyle::WeakForm);
                ident::SmootherConfig raw;
                raw.kind = ident::SmootherKind::Identity;
                sys = ident::assemble_differential(f, dict, raw);
            }
            std::ofstream os(asm_out);
            if (!os) throw std::runtime_error("cannot write file: " + asm_out);
            os.precision(17);
            for (size_t k = 0; k < sys.cols.size(); ++k)
                os << (k ? "," : "") << sys.cols[k].label;
            os << ",rhs\n";
            for (int r = 0; r < sys.nrows(); ++r) {
                for (int k = 0; k < sys.ncols(); ++k) os << sys.A(r, k) << ",";
                os << sys.b[r] << "\n";
            }
            std::cout << "wrote " << asm_out << " (" << sys.nrows() << " rows x " << sys.ncols()
                      << " features)\n";
            return 0;
        }
        if (idf->parsed()) {
            Json config = resolve_config(idf_flags);
            if (!idf_data.empty()) config["data"] = {{"path", idf_data}};
            return run_and_write(config, idf_flags.out);
        }
        if (ev->parsed()) {
            Json metrics = ident::evaluate_report(load_json(ev_report), load_json(ev_truth));
            std::cout << metrics.dump(2) << "\n";
            return 0;
        }
        if (rep->parsed()) {
            Json config = replicate_config(rep_table);
            if (rep_flags.seed_set) config["seed"] = rep_flags.seed;
            if (!rep_flags.pipeline.empty()) config["pipeline"] = rep_flags.pipeline;
            if (rep_flags.noise_percent >= 0.0)
                config["noise"] = {{"kind", "percent"}, {"level", rep_flags.noise_percent / 100.0}};
            if (rep_flags.noise_nsr >= 0.0)
                config["noise"] = {{"kind", "nsr"}, {"level", rep_flags.noise_nsr}};
            return run_and_write(config, rep_flags.out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
