#include <algorithm>
#include <cstdio>
#include <ostream>

#include <nlohmann/json.hpp>

#include "dpa/assoc.hpp"
#include "dpa/errors.hpp"
#include "dpa/log.hpp"

namespace dpa::assoc {

using nlohmann::json;

namespace {

Formula base_formula(const FeatureTable& table, const std::vector<std::string>& leading,
                     const ModelsOptions& options) {
    Formula f;
    for (const auto& name : leading) f.terms.push_back({{name}});
    for (const char* name : {"energy", "period"}) f.terms.push_back({{name}});
    f.terms.push_back({{"energy", "period"}});
    f.terms.push_back({{"baseline_pf"}});
    const auto& covs = options.covariates.empty() ? table.covariate_columns : options.covariates;
    for (const auto& c : covs) f.terms.push_back({{c}});
    for (const auto& t : f.terms)
        for (const auto& factor : t.factors)
            if (!table.has(factor)) throw InvalidInputError("run_models: feature table has no column '" + factor + "'");
    return f;
}

ModelReport run_one(const FeatureTable& table, const Formula& formula, const std::string& label,
                    const ModelsOptions& options) {
    ModelReport r;
    r.label = label;
    r.full = fit_lmm(table, formula);
    r.reduced = fit_lmm(table, formula.without("energy:period"));
    r.interaction = lrt(r.full, r.reduced);
    r.significant = r.interaction.p < options.alpha;
    if (options.reml_report) {
        LmmOptions reml;
        reml.reml = true;
        r.full = fit_lmm(table, formula, reml);
    }
    return r;
}

json fit_json(const LmmFit& fit) {
    json coefs = json::array();
    for (const auto& c : fit.fixed_effects)
        coefs.push_back({{"term", c.name}, {"estimate", c.estimate}, {"se", c.se}, {"t", c.t}, {"p", c.p}});
    return {{"formula", fit.formula.str()},
            {"estimation", fit.reml ? "REML" : "ML"},
            {"coefficients", coefs},
            {"var_random", fit.var_random},
            {"var_resid", fit.var_resid},
            {"boundary", fit.boundary},
            {"loglik", fit.loglik},
            {"bic", fit.bic},
            {"n_obs", fit.n_obs},
            {"n_groups", fit.n_groups}};
}

json model_json(const ModelReport& m) {
    return {{"label", m.label},
            {"full", fit_json(m.full)},
            {"reduced", fit_json(m.reduced)},
            {"interaction_lrt",
             {{"tested", m.interaction.tested},
              {"statistic", m.interaction.statistic},
              {"df", m.interaction.df},
              {"p", m.interaction.p},
              {"significant", m.significant}}}};
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

void text_table(std::ostream& out, const ModelReport& m, double alpha) {
    out << m.label << "  (" << m.full.formula.str() << ")\n";
    char line[160];
    std::snprintf(line, sizeof line, "  %-22s %20s %12s\n", "Term", "Estimate (SE)", "p");
    out << line;
    for (const auto& c : m.full.fixed_effects) {
        const std::string est = fmt("%.3f", c.estimate) + " (" + fmt("%.3f", c.se) + ")";
        const std::string p = c.p < 1e-4 ? "<0.0001" : fmt("%.4f", c.p);
        std::snprintf(line, sizeof line, "  %-22s %20s %12s\n", c.name.c_str(), est.c_str(), p.c_str());
        out << line;
    }
    out << "  random intercept variance " << fmt("%.4g", m.full.var_random) << ", residual variance "
        << fmt("%.4g", m.full.var_resid) << (m.full.boundary ? " (boundary)" : "") << '\n';
    out << "  " << (m.full.reml ? "REML" : "ML") << " loglik " << fmt("%.3f", m.full.loglik) << ", BIC "
        << fmt("%.3f", m.full.bic) << ", n_obs " << m.full.n_obs << ", participants " << m.full.n_groups << '\n';
    out << "  LRT energy:period: chi2(" << m.interaction.df << ") = " << fmt("%.4f", m.interaction.statistic)
        << ", p = " << fmt("%.4g", m.interaction.p) << (m.significant ? " < " : " >= ") << fmt("%g", alpha)
        << (m.significant ? " significant\n" : " not significant\n");
}

json lasso_json(const LassoResult& result) {
    json path = json::array();
    for (const auto& s : result.path)
        path.push_back({{"lambda", s.lambda},
                        {"coefficients", s.coefficients},
                        {"nonzero", s.nonzero},
                        {"loglik", s.loglik},
                        {"support_loglik", s.support_loglik},
                        {"bic", s.bic}});
    json j{{"names", result.names},
           {"variance_components", {{"theta", result.theta}, {"var_resid", result.var_resid}, {"frozen_from", "ML fit"}}},
           {"path", path},
           {"chosen_lambda", result.path.empty() ? 0.0 : result.path[result.chosen].lambda},
           {"selected", result.selected},
           {"refit", fit_json(result.refit)}};
    return j;
}

} // namespace

Formula model1_formula(const FeatureTable& table, const ModelsOptions& options) {
    const int l = std::min(table.n_pcs, options.max_pcs);
    if (l < 1) throw InvalidInputError("model 1: feature table has no PC score columns");
    std::vector<std::string> pcs;
    for (int k = 1; k <= l; ++k) pcs.push_back("pc" + std::to_string(k));
    return base_formula(table, pcs, options);
}

Formula model2_formula(const FeatureTable& table, const ModelsOptions& options) {
    return base_formula(table, {"delta_net_auc"}, options);
}

ModelsReport run_models(const FeatureTable& table, const ModelsOptions& options) {
    if (!(options.alpha > 0.0 && options.alpha < 1.0)) throw InvalidInputError("run_models: alpha must lie in (0, 1)");
    ModelsReport rep;
    rep.alpha = options.alpha;
    rep.n_obs = table.rows();
    rep.collinear = table.collinear;
    for (const auto& c : table.collinear)
        log::warn("period " + std::to_string(c.period) + ": " + c.a + " and " + c.b + " are collinear (r = " +
                  fmt("%.3f", c.r) + ")");
    rep.model1 = run_one(table, model1_formula(table, options), "Model 1", options);
    rep.model2 = run_one(table, model2_formula(table, options), "Model 2", options);
    return rep;
}

void write_report_json(std::ostream& out, const ModelsReport& report) {
    json flags = json::array();
    for (const auto& c : report.collinear) flags.push_back({{"period", c.period}, {"a", c.a}, {"b", c.b}, {"r", c.r}});
    json j{{"alpha", report.alpha},
           {"n_obs", report.n_obs},
           {"bic_sample_size", "observation rows"},
           {"random_effects", "participant intercept"},
           {"collinear_pairs", flags},
           {"models", {model_json(report.model1), model_json(report.model2)}}};
    if (report.selection) j["selection"] = lasso_json(*report.selection);
    out << j.dump(2) << '\n';
}

void write_report_text(std::ostream& out, const ModelsReport& report) {
    out << "Observations: " << report.n_obs << ", Bonferroni alpha " << report.alpha << "\n";
    for (const auto& c : report.collinear)
        out << "Collinear (period " << c.period << "): " << c.a << " ~ " << c.b << ", r = " << fmt("%.3f", c.r)
            << '\n';
    out << '\n';
    text_table(out, report.model1, report.alpha);
    out << '\n';
    text_table(out, report.model2, report.alpha);
    if (report.selection && !report.selection->path.empty()) {
        const auto& sel = *report.selection;
        out << "\nL1 selection over Model 1 terms (BIC, lambda " << fmt("%.4g", sel.path[sel.chosen].lambda)
            << "):";
        for (const auto& t : sel.selected) out << ' ' << t;
        out << '\n';
    }
}

void write_lasso_json(std::ostream& out, const LassoResult& result) {
    out << lasso_json(result).dump(2) << '\n';
}

} // namespace dpa::assoc
