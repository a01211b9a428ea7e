#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <tuple>
#include <stdexcept>
#include <string>
#include <vector>

#include "ident/grid.hpp"

namespace ident {

/// A symbolic dictionary entry: either a weak-form term d^alpha/dx^alpha (u^beta)
/// (carried with a 1/beta scale for alpha >= 1 so that e.g. (alpha=1, beta=2)
/// evaluates to u*u_x), or a general monomial prod_j (d^j u)^{e_j}.
struct FeatureTerm {
    enum class Form { WeakForm, GeneralMonomial };
    Form form = Form::GeneralMonomial;

    // WeakForm fields
    int alpha = 0;
    int beta = 0;

    // GeneralMonomial: derivative order -> exponent (orders with zero exponent omitted)
    std::map<int, int> exponents;

    std::string label;

    static FeatureTerm weak(int a, int b) {
        FeatureTerm t;
        t.form = Form::WeakForm;
        t.alpha = a;
        t.beta = b;
        t.label = weak_label(a, b);
        return t;
    }

    static FeatureTerm monomial(std::map<int, int> exps) {
        FeatureTerm t;
        t.form = Form::GeneralMonomial;
        for (auto& [o, e] : exps)
            if (e > 0) t.exponents[o] = e;
        t.label = monomial_label(t.exponents);
        return t;
    }

    bool is_constant() const {
        return form == Form::WeakForm ? (alpha == 0 && beta == 0) : exponents.empty();
    }

    /// Highest derivative order the term references after differential expansion.
    int max_derivative_order() const {
        if (form == Form::WeakForm) return alpha;
        int m = 0;
        for (auto& [o, e] : exponents) m = std::max(m, o);
        return m;
    }

    int total_degree() const {
        if (form == Form::WeakForm) return beta;
        int d = 0;
        for (auto& [o, e] : exponents) d += e;
        return d;
    }

    static std::string deriv_suffix(int a) { return std::string(a, 'x'); }

    static std::string power_label(int b) {
        if (b == 1) return "u";
        return "u^" + std::to_string(b);
    }

    static std::string weak_label(int a, int b) {
        if (a == 0 && b == 0) return "1";
        if (a == 0) return power_label(b);
        if (b == 1) return "u_" + deriv_suffix(a);
        if (a == 1) return (b == 2 ? std::string("u") : power_label(b - 1)) + "*u_x";
        return "(" + power_label(b) + ")_" + deriv_suffix(a) + "/" + std::to_string(b);
    }

    static std::string monomial_label(const std::map<int, int>& exps) {
        if (exps.empty()) return "1";
        std::string s;
        for (auto& [o, e] : exps) {
            if (!s.empty()) s += "*";
            std::string base = (o == 0) ? "u" : "u_" + deriv_suffix(o);
            s += base;
            if (e > 1) s += "^" + std::to_string(e);
        }
        return s;
    }
};

enum class DictionaryStyle { WeakForm, GeneralMonomial };

struct Dictionary {
    std::vector<FeatureTerm> terms;
    DictionaryStyle style = DictionaryStyle::GeneralMonomial;
    int max_alpha = 0;
    int max_beta = 0;

    int size() const { return static_cast<int>(terms.size()); }
    const FeatureTerm& operator[](int k) const { return terms[k]; }

    std::vector<std::string> labels() const {
        std::vector<std::string> out;
        out.reserve(terms.size());
        for (auto& t : terms) out.push_back(t.label);
        return out;
    }

    int index_of(const std::string& label) const {
        for (int k = 0; k < size(); ++k)
            if (terms[k].label == label) return k;
        throw std::invalid_argument("no such dictionary term: " + label);
    }

    /// Highest derivative order any term needs.
    int max_derivative_order() const {
        int m = 0;
        for (auto& t : terms) m = std::max(m, t.max_derivative_order());
        return m;
    }
};

namespace detail {

inline void enumerate_monomials(int max_deriv, int max_degree, std::vector<FeatureTerm>& out) {
    // exponent vectors e_0..e_max_deriv with sum <= max_degree
    std::vector<int> e(max_deriv + 1, 0);
    std::vector<std::vector<int>> all;
    std::function<void(int, int)> rec = [&](int pos, int left) {
        if (pos > max_deriv) {
            all.push_back(e);
            return;
        }
        for (int v = 0; v <= left; ++v) {
            e[pos] = v;
            rec(pos + 1, left - v);
        }
        e[pos] = 0;
    };
    rec(0, max_degree);

    // order: by highest derivative order present, then by total degree, then by
    // exponent of the highest order ascending (1, u, u^2, u_x, u*u_x, u_x^2, ...)
    auto key = [](const std::vector<int>& v) {
        int hi = 0, deg = 0;
        for (size_t j = 0; j < v.size(); ++j) {
            deg += v[j];
            if (v[j] > 0) hi = static_cast<int>(j);
        }
        return std::tuple<int, int, int>(hi, deg, v[hi]);
    };
    std::stable_sort(all.begin(), all.end(),
                     [&](const auto& a, const auto& b) { return key(a) < key(b); });
    for (auto& v : all) {
        std::map<int, int> exps;
        for (size_t j = 0; j < v.size(); ++j)
            if (v[j] > 0) exps[static_cast<int>(j)] = v[j];
        out.push_back(FeatureTerm::monomial(std::move(exps)));
    }
}

}  // namespace detail

/// Enumerates the candidate dictionary. WeakForm style lists all (alpha, beta)
/// pairs with alpha <= max_alpha, beta <= max_beta, dropping the identically
/// zero beta=0, alpha>=1 entries. GeneralMonomial lists monomials in u and its
/// derivatives up to order max_alpha with total degree <= max_total_degree.
inline Dictionary build_dictionary(int max_alpha, int max_beta, DictionaryStyle style,
                                   int max_total_degree = 0) {
    if (max_alpha < 0 || max_alpha > 4) throw std::invalid_argument("max_alpha out of range [0,4]");
    if (max_beta < 0 || max_beta > 6) throw std::invalid_argument("max_beta out of range [0,6]");
    Dictionary d;
    d.style = style;
    d.max_alpha = max_alpha;
    d.max_beta = max_beta;
    if (style == DictionaryStyle::WeakForm) {
        for (int b = 0; b <= max_beta; ++b)
            for (int a = 0; a <= max_alpha; ++a) {
                if (b == 0 && a >= 1) continue;  // d^a (u^0) is identically zero
                d.terms.push_back(FeatureTerm::weak(a, b));
            }
    } else {
        if (max_total_degree < 0) throw std::invalid_argument("max_total_degree must be >= 0");
        detail::enumerate_monomials(max_alpha, max_total_degree, d.terms);
    }
    return d;
}

/// Pointwise evaluation of a term given a table of derivative estimates
/// (order -> nx x nt matrix; order 0 is u itself; for weak terms the table
/// must additionally contain the differentiated powers, see eval below).
inline Matrix eval_monomial_pointwise(const FeatureTerm& term,
                                      const std::map<int, Matrix>& derivative_table) {
    if (derivative_table.empty()) throw std::invalid_argument("empty derivative table");
    const Matrix& any = derivative_table.begin()->second;
    Matrix out = Matrix::Ones(any.rows(), any.cols());
    for (auto& [order, exp] : term.exponents) {
        auto it = derivative_table.find(order);
        if (it == derivative_table.end())
            throw std::invalid_argument("derivative table missing order " + std::to_string(order));
        for (int e = 0; e < exp; ++e) out = out.cwiseProduct(it->second);
    }
    return out;
}

}  // namespace ident
