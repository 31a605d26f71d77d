#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "design.hpp"
#include "dpa/assoc.hpp"
#include "dpa/errors.hpp"

namespace dpa::assoc {

// ---------------------------------------------------------------------------
// Formula
// ---------------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

} // namespace

std::string Term::name() const {
    std::string s;
    for (std::size_t i = 0; i < factors.size(); ++i) s += (i ? ":" : "") + factors[i];
    return s;
}

Formula Formula::parse(const std::string& text) {
    const auto tilde = text.find('~');
    if (tilde == std::string::npos) throw InvalidInputError("formula '" + text + "': missing '~'");
    Formula f;
    f.response = trim(text.substr(0, tilde));
    if (f.response.empty()) throw InvalidInputError("formula '" + text + "': missing response");
    std::string rhs = text.substr(tilde + 1);
    // "- 1" removes the intercept.
    for (std::size_t pos; (pos = rhs.find("- 1")) != std::string::npos || (pos = rhs.find("-1")) != std::string::npos;) {
        f.intercept = false;
        rhs.erase(pos, rhs[pos + 1] == ' ' ? 3 : 2);
    }
    for (const auto& part : split_on(rhs, '+')) {
        if (part.empty()) throw InvalidInputError("formula '" + text + "': empty term");
        if (part == "1") continue;
        if (part == "0") {
            f.intercept = false;
            continue;
        }
        Term t;
        t.factors = split_on(part, ':');
        for (const auto& x : t.factors)
            if (x.empty()) throw InvalidInputError("formula '" + text + "': empty factor in '" + part + "'");
        if (f.contains(t.name())) throw InvalidInputError("formula '" + text + "': repeated term " + t.name());
        f.terms.push_back(std::move(t));
    }
    return f;
}

std::string Formula::str() const {
    std::string s = response + " ~ ";
    std::vector<std::string> parts;
    if (!intercept) parts.push_back("0");
    for (const auto& t : terms) parts.push_back(t.name());
    if (parts.empty()) parts.push_back("1");
    for (std::size_t i = 0; i < parts.size(); ++i) s += (i ? " + " : "") + parts[i];
    return s;
}

std::vector<std::string> Formula::coefficient_names() const {
    std::vector<std::string> out;
    if (intercept) out.push_back(kInterceptName);
    for (const auto& t : terms) out.push_back(t.name());
    return out;
}

bool Formula::contains(const std::string& term_name) const {
    return std::any_of(terms.begin(), terms.end(), [&](const Term& t) { return t.name() == term_name; });
}

Formula Formula::without(const std::string& term_name) const {
    if (!contains(term_name)) throw InvalidInputError("formula has no term " + term_name);
    Formula f = *this;
    f.terms.erase(std::remove_if(f.terms.begin(), f.terms.end(),
                                 [&](const Term& t) { return t.name() == term_name; }),
                  f.terms.end());
    return f;
}

// ---------------------------------------------------------------------------
// Design
// ---------------------------------------------------------------------------

Design build_design(const FeatureTable& table, const Formula& formula) {
    Design d;
    d.names = formula.coefficient_names();
    const Eigen::Index n = static_cast<Eigen::Index>(table.rows());
    const Eigen::Index p = static_cast<Eigen::Index>(d.names.size());
    if (n == 0) throw InvalidInputError("fit: empty feature table");
    d.x.resize(n, p);
    Eigen::Index j = 0;
    if (formula.intercept) d.x.col(j++).setOnes();
    for (const auto& t : formula.terms) {
        Eigen::VectorXd col = Eigen::VectorXd::Ones(n);
        for (const auto& f : t.factors) col.array() *= table.column(f).array();
        d.x.col(j++) = col;
    }
    d.y = table.column(formula.response);

    std::unordered_map<std::string, int> index;
    d.group.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& pid = table.participant_ids[static_cast<std::size_t>(i)];
        auto [it, inserted] = index.emplace(pid, static_cast<int>(index.size()));
        d.group[static_cast<std::size_t>(i)] = it->second;
    }
    d.n_groups = static_cast<int>(index.size());
    d.group_size.assign(static_cast<std::size_t>(d.n_groups), 0);
    for (int g : d.group) ++d.group_size[static_cast<std::size_t>(g)];

    // Order-free signature of the (participant, period, response) rows.
    std::uint64_t sig = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        std::uint64_t h = 1469598103934665603ull;
        auto mix = [&h](const void* data, std::size_t len) {
            const auto* b = static_cast<const unsigned char*>(data);
            for (std::size_t k = 0; k < len; ++k) h = (h ^ b[k]) * 1099511628211ull;
        };
        const auto& pid = table.participant_ids[static_cast<std::size_t>(i)];
        mix(pid.data(), pid.size());
        mix(&table.periods[static_cast<std::size_t>(i)], sizeof(int));
        const double yi = d.y[i];
        mix(&yi, sizeof(double));
        sig += h;
    }
    d.signature = sig;
    return d;
}

void check_rank(const Design& d) {
    const Eigen::Index p = d.x.cols();
    if (d.x.rows() <= p)
        throw InvalidInputError("fit: " + std::to_string(d.x.rows()) + " rows cannot identify " +
                                std::to_string(p) + " fixed effects");
    Eigen::VectorXd scale = d.x.colwise().norm();
    for (Eigen::Index j = 0; j < p; ++j)
        if (scale[j] == 0.0) scale[j] = 1.0;
    const Eigen::MatrixXd xs = d.x * scale.cwiseInverse().asDiagonal();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xs);
    qr.setThreshold(1e-10);
    if (qr.rank() == p) return;
    std::string cols;
    for (Eigen::Index k = qr.rank(); k < p; ++k) {
        if (!cols.empty()) cols += ", ";
        cols += d.names[static_cast<std::size_t>(qr.colsPermutation().indices()[k])];
    }
    throw InvalidInputError("fit: design matrix is rank deficient; collinear column(s): " + cols);
}

// ---------------------------------------------------------------------------
// Profiled likelihood
// ---------------------------------------------------------------------------

namespace {

struct GroupSums {
    Eigen::MatrixXd sx;  // G x p
    Eigen::VectorXd sy;  // G
};

GroupSums group_sums(const Design& d) {
    GroupSums s;
    s.sx = Eigen::MatrixXd::Zero(d.n_groups, d.x.cols());
    s.sy = Eigen::VectorXd::Zero(d.n_groups);
    for (Eigen::Index i = 0; i < d.x.rows(); ++i) {
        const int g = d.group[static_cast<std::size_t>(i)];
        s.sx.row(g) += d.x.row(i);
        s.sy[g] += d.y[i];
    }
    return s;
}

struct Profile {
    double theta = 0.0;
    double loglik = -std::numeric_limits<double>::infinity();
    double sigma2 = 0.0;
    Eigen::VectorXd beta;
    Eigen::MatrixXd a;  // X' V~^-1 X
    double slope = 0.0; // d loglik / d theta (ML only)
};

// V~ = I + theta J per group, V~^-1 = I - c_g J with c_g = theta / (1 + n_g theta).
Profile profile(const Design& d, const GroupSums& s, const Eigen::MatrixXd& xtx, const Eigen::VectorXd& xty,
                double theta, bool reml) {
    const Eigen::Index n = d.x.rows();
    const Eigen::Index p = d.x.cols();
    Eigen::VectorXd c(d.n_groups);
    double logdet = 0.0;
    for (int g = 0; g < d.n_groups; ++g) {
        const double ng = d.group_size[static_cast<std::size_t>(g)];
        c[g] = theta / (1.0 + ng * theta);
        logdet += std::log1p(ng * theta);
    }
    Profile pr;
    pr.theta = theta;
    pr.a = xtx - s.sx.transpose() * c.asDiagonal() * s.sx;
    const Eigen::VectorXd b = xty - s.sx.transpose() * c.asDiagonal() * s.sy;
    Eigen::LLT<Eigen::MatrixXd> llt(pr.a);
    if (llt.info() != Eigen::Success) throw NumericError("fit_lmm: X' V^-1 X is not positive definite");
    pr.beta = llt.solve(b);

    const Eigen::VectorXd r = d.y - d.x * pr.beta;
    Eigen::VectorXd rg = Eigen::VectorXd::Zero(d.n_groups);
    for (Eigen::Index i = 0; i < n; ++i) rg[d.group[static_cast<std::size_t>(i)]] += r[i];
    const double q = r.squaredNorm() - (c.array() * rg.array().square()).sum();
    if (!(q > 0.0)) throw NumericError("fit_lmm: residual sum of squares is not positive");

    const double two_pi = 2.0 * std::numbers::pi;
    if (!reml) {
        pr.sigma2 = q / static_cast<double>(n);
        pr.loglik = -0.5 * (n * std::log(two_pi * pr.sigma2) + logdet + n);
        // beta(theta) minimizes q, so only the explicit theta dependence counts.
        double dq = 0.0, dlogdet = 0.0;
        for (int g = 0; g < d.n_groups; ++g) {
            const double ng = d.group_size[static_cast<std::size_t>(g)];
            const double den = 1.0 + ng * theta;
            dq -= rg[g] * rg[g] / (den * den);
            dlogdet += ng / den;
        }
        pr.slope = -0.5 * (static_cast<double>(n) * dq / q + dlogdet);
    } else {
        const double m = static_cast<double>(n - p);
        pr.sigma2 = q / m;
        const Eigen::MatrixXd l = llt.matrixL();
        const double logdet_a = 2.0 * l.diagonal().array().log().sum();
        pr.loglik = -0.5 * (m * std::log(two_pi * pr.sigma2) + logdet + logdet_a + m);
    }
    return pr;
}

LmmFit finish(const Design& d, const Formula& formula, const Profile& pr, bool reml, bool boundary) {
    const Eigen::Index n = d.x.rows();
    const Eigen::Index p = d.x.cols();
    LmmFit fit;
    fit.formula = formula;
    fit.reml = reml;
    fit.boundary = boundary;
    fit.theta = pr.theta;
    fit.var_resid = pr.sigma2;
    fit.var_random = pr.theta * pr.sigma2;
    fit.loglik = pr.loglik;
    fit.n_obs = static_cast<std::size_t>(n);
    fit.n_groups = static_cast<std::size_t>(d.n_groups);
    fit.rows_signature = d.signature;
    fit.bic = -2.0 * pr.loglik + static_cast<double>(p + 2) * std::log(static_cast<double>(n));

    const Eigen::MatrixXd cov = pr.sigma2 * pr.a.llt().solve(Eigen::MatrixXd::Identity(p, p));
    const double df = static_cast<double>(n - p);
    const boost::math::students_t tdist(df);
    for (Eigen::Index j = 0; j < p; ++j) {
        Coefficient c;
        c.name = d.names[static_cast<std::size_t>(j)];
        c.estimate = pr.beta[j];
        c.se = std::sqrt(std::max(cov(j, j), 0.0));
        c.t = c.se > 0.0 ? c.estimate / c.se : 0.0;
        c.p = 2.0 * boost::math::cdf(boost::math::complement(tdist, std::abs(c.t)));
        fit.fixed_effects.push_back(c);
    }
    return fit;
}

} // namespace

const Coefficient& LmmFit::coef(const std::string& name) const {
    for (const auto& c : fixed_effects)
        if (c.name == name) return c;
    throw InvalidInputError("fit has no coefficient '" + name + "'");
}

Eigen::VectorXd LmmFit::beta() const {
    Eigen::VectorXd b(static_cast<Eigen::Index>(fixed_effects.size()));
    for (std::size_t j = 0; j < fixed_effects.size(); ++j) b[static_cast<Eigen::Index>(j)] = fixed_effects[j].estimate;
    return b;
}

LmmFit fit_lmm(const FeatureTable& table, const Formula& formula, const LmmOptions& options) {
    const Design d = build_design(table, formula);
    if (d.n_groups < 2) throw InvalidInputError("fit_lmm: need at least two participants");
    check_rank(d);
    if (!(options.log_theta_lo < options.log_theta_hi))
        throw InvalidInputError("fit_lmm: empty log-theta bracket");

    const GroupSums s = group_sums(d);
    const Eigen::MatrixXd xtx = d.x.transpose() * d.x;
    const Eigen::VectorXd xty = d.x.transpose() * d.y;
    auto eval = [&](double log_theta) {
        return profile(d, s, xtx, xty, std::exp(log_theta), options.reml);
    };

    // Golden-section search for the maximum over log theta.
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = options.log_theta_lo;
    double hi = options.log_theta_hi;
    double x1 = hi - invphi * (hi - lo);
    double x2 = lo + invphi * (hi - lo);
    Profile p1 = eval(x1);
    Profile p2 = eval(x2);
    while (hi - lo > options.tol) {
        if (p1.loglik >= p2.loglik) {
            hi = x2;
            x2 = x1;
            p2 = std::move(p1);
            x1 = hi - invphi * (hi - lo);
            p1 = eval(x1);
        } else {
            lo = x1;
            x1 = x2;
            p1 = std::move(p2);
            x2 = lo + invphi * (hi - lo);
            p2 = eval(x2);
        }
    }
    Profile best = p1.loglik >= p2.loglik ? std::move(p1) : std::move(p2);
    for (double edge : {options.log_theta_lo, options.log_theta_hi}) {
        Profile pe = eval(edge);
        if (pe.loglik > best.loglik) best = std::move(pe);
    }
    // Golden section resolves log theta only to about sqrt(eps) on the flat
    // top; bisect the analytic slope to pin the interior ML optimum.
    if (!options.reml) {
        const double at = std::log(best.theta);
        double a = at, b = at;
        for (double step = 1e-7; step < 1.0; step *= 4.0) {
            a = std::max(at - step, options.log_theta_lo);
            b = std::min(at + step, options.log_theta_hi);
            if (eval(a).slope > 0.0 && eval(b).slope < 0.0) break;
        }
        if (eval(a).slope > 0.0 && eval(b).slope < 0.0) {
            for (int it = 0; it < 100 && b - a > 1e-15 * std::max(1.0, std::abs(at)); ++it) {
                const double mid = 0.5 * (a + b);
                (eval(mid).slope > 0.0 ? a : b) = mid;
            }
            Profile polished = eval(0.5 * (a + b));
            if (polished.loglik >= best.loglik - 1e-12 * std::abs(best.loglik)) best = std::move(polished);
        }
    }
    // The search cannot reach theta = 0 itself; compare with the boundary fit.
    Profile zero = profile(d, s, xtx, xty, 0.0, options.reml);
    if (zero.loglik >= best.loglik) return finish(d, formula, zero, options.reml, true);
    return finish(d, formula, best, options.reml, false);
}

LmmFit fit_lmm_fixed_theta(const FeatureTable& table, const Formula& formula, double theta, bool reml) {
    if (!(theta >= 0.0) || !std::isfinite(theta))
        throw InvalidInputError("fit_lmm_fixed_theta: theta must be finite and >= 0");
    const Design d = build_design(table, formula);
    check_rank(d);
    const GroupSums s = group_sums(d);
    const Eigen::MatrixXd xtx = d.x.transpose() * d.x;
    const Eigen::VectorXd xty = d.x.transpose() * d.y;
    return finish(d, formula, profile(d, s, xtx, xty, theta, reml), reml, theta == 0.0);
}

// ---------------------------------------------------------------------------
// Likelihood-ratio test
// ---------------------------------------------------------------------------

double chi2_sf(double x, int df) {
    if (df <= 0) throw InvalidInputError("chi2_sf: df must be positive");
    if (!(x > 0.0)) return 1.0;
    if (!std::isfinite(x)) return 0.0;
    const boost::math::chi_squared dist(df);
    return boost::math::cdf(boost::math::complement(dist, x));
}

LrtResult lrt(const LmmFit& full, const LmmFit& reduced) {
    if (full.reml || reduced.reml) throw InvalidInputError("lrt: REML fits cannot compare fixed effects");
    if (full.rows_signature != reduced.rows_signature || full.n_obs != reduced.n_obs)
        throw InvalidInputError("lrt: fits use different rows");
    if (full.formula.response != reduced.formula.response)
        throw InvalidInputError("lrt: fits have different responses");
    std::string tested;
    for (const auto& c : reduced.fixed_effects) {
        const bool found = std::any_of(full.fixed_effects.begin(), full.fixed_effects.end(),
                                       [&](const Coefficient& f) { return f.name == c.name; });
        if (!found) throw InvalidInputError("lrt: models are not nested ('" + c.name + "' missing from full)");
    }
    for (const auto& c : full.fixed_effects) {
        const bool found = std::any_of(reduced.fixed_effects.begin(), reduced.fixed_effects.end(),
                                       [&](const Coefficient& f) { return f.name == c.name; });
        if (!found) tested += (tested.empty() ? "" : ", ") + c.name;
    }
    LrtResult r;
    r.tested = tested;
    r.df = static_cast<int>(full.n_fixed()) - static_cast<int>(reduced.n_fixed());
    // Optimizer slack can leave the difference a hair below zero.
    r.statistic = std::max(0.0, 2.0 * (full.loglik - reduced.loglik));
    r.p = r.df > 0 ? chi2_sf(r.statistic, r.df) : 1.0;
    return r;
}

} // namespace dpa::assoc
