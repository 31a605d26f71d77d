#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "config_json.hpp"
#include "dpa/errors.hpp"

namespace dpa::harness {

using nlohmann::json;

namespace {

// Reads keys of one JSON object; anything left unread is an error.
class Obj {
public:
    Obj(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw InvalidInputError("config: " + where_ + " must be an object");
    }

    template <class T>
    void get(const char* key, T& value) {
        if (!j_.contains(key)) return;
        used_.insert(key);
        try {
            value = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw InvalidInputError("config: " + where_ + "." + key + ": " + e.what());
        }
    }

    std::optional<Obj> sub(const char* key) {
        if (!j_.contains(key)) return std::nullopt;
        used_.insert(key);
        return Obj(j_.at(key), where_ + "." + key);
    }

    const json* raw(const char* key) {
        if (!j_.contains(key)) return nullptr;
        used_.insert(key);
        return &j_.at(key);
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!used_.count(k)) throw InvalidInputError("config: unknown key " + where_ + "." + k);
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> used_;
};

void read_period(Obj o, PeriodLaw& p) {
    o.get("drift_shift", p.drift_shift);
    o.get("drift_lift", p.drift_lift);
    o.get("drift_scale_sd", p.drift_scale_sd);
    o.get("loading_sd", p.loading_sd);
    o.get("noise_sd", p.noise_sd);
    o.get("noise_bumps", p.noise_bumps);
    o.finish();
}

SimConfig read_sim(Obj o) {
    SimConfig c;
    o.get("n_participants", c.n_participants);
    o.get("visits", c.visits);
    o.get("days_per_visit", c.days_per_visit);
    o.get("minute_noise_cv", c.minute_noise_cv);
    o.get("day_sd", c.day_sd);
    o.get("control_stride", c.control_stride);
    o.get("sigma_v", c.sigma_v);
    o.get("n_steps", c.n_steps);
    o.get("seed", c.seed);
    if (auto b = o.sub("bumps")) {
        auto& m = c.bumps;
        b->get("min_bumps", m.min_bumps);
        b->get("max_bumps", m.max_bumps);
        b->get("base_level", m.base_level);
        b->get("amplitude_mean", m.amplitude_mean);
        b->get("amplitude_sd", m.amplitude_sd);
        b->get("location_lo", m.location_lo);
        b->get("location_hi", m.location_hi);
        b->get("width_lo", m.width_lo);
        b->get("width_hi", m.width_hi);
        b->finish();
    }
    if (auto m = o.sub("mode")) {
        m->get("center", c.mode.center);
        m->get("width", c.mode.width);
        m->get("y_amplitude", c.mode.y_amplitude);
        m->get("x_amplitude", c.mode.x_amplitude);
        m->finish();
    }
    if (const json* p = o.raw("periods")) {
        if (!p->is_array() || p->size() != 2) throw InvalidInputError("config: simulation.periods must list 2 periods");
        read_period(Obj((*p)[0], "simulation.periods[0]"), c.periods[0]);
        read_period(Obj((*p)[1], "simulation.periods[1]"), c.periods[1]);
    }
    if (auto m = o.sub("outcome")) {
        auto& l = c.outcome;
        m->get("intercept", l.intercept);
        m->get("beta_loading", l.beta_loading);
        m->get("beta_energy", l.beta_energy);
        m->get("beta_period", l.beta_period);
        m->get("beta_energy_period", l.beta_energy_period);
        m->get("beta_baseline", l.beta_baseline);
        m->get("beta_age", l.beta_age);
        m->get("baseline_mean", l.baseline_mean);
        m->get("baseline_sd", l.baseline_sd);
        m->get("random_sd", l.random_sd);
        m->get("noise_sd", l.noise_sd);
        m->finish();
    }
    if (auto m = o.sub("missing")) {
        m->get("outcome", c.missing.outcome);
        m->get("covariate", c.missing.covariate);
        m->get("wear_gap_day", c.missing.wear_gap_day);
        m->get("gap_min", c.missing.gap_min);
        m->get("gap_max", c.missing.gap_max);
        m->finish();
    }
    o.finish();
    return c;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) return {};
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

PipelineConfig read_pipeline(Obj o, const std::filesystem::path& base) {
    PipelineConfig c;
    if (auto in = o.sub("inputs")) {
        std::string minutes, outcomes, covariates;
        in->get("minutes", minutes);
        in->get("outcomes", outcomes);
        in->get("covariates", covariates);
        in->get("categorical_reference", c.categorical_reference);
        in->finish();
        c.minutes = resolve(base, minutes);
        c.outcomes = resolve(base, outcomes);
        c.covariates = resolve(base, covariates);
    }
    if (auto p = o.sub("prep")) {
        p->get("target_df", c.target_df);
        p->get("max_nonwear_minutes", c.day_rules.max_nonwear_minutes);
        p->get("min_wear_minutes", c.day_rules.min_wear_minutes);
        p->get("min_valid_days", c.day_rules.min_valid_days);
        p->finish();
    }
    if (auto k = o.sub("kernel")) {
        k->get("sigma_v", c.kernel.sigma_v);
        k->get("sigma_w", c.kernel.sigma_w);
        k->get("gamma_data", c.kernel.gamma_data);
        k->get("n_steps", c.kernel.n_steps);
        k->get("control_stride", c.kernel.control_stride);
        k->finish();
    }
    if (auto m = o.sub("match")) {
        m->get("max_iters", c.match.max_iters);
        m->get("rel_tol", c.match.rel_tol);
        m->get("max_backtracks", c.match.max_backtracks);
        m->get("armijo_c", c.match.armijo_c);
        m->get("backtrack_factor", c.match.backtrack_factor);
        m->finish();
    }
    if (auto f = o.sub("fpca")) {
        f->get("univariate_pve", c.univariate_pve);
        f->get("multivariate_pve", c.multivariate_pve);
        f->finish();
    }
    if (auto a = o.sub("assoc")) {
        a->get("max_pcs", c.models.max_pcs);
        a->get("alpha", c.models.alpha);
        a->get("reml_report", c.models.reml_report);
        a->get("covariates", c.models.covariates);
        a->get("lasso", c.lasso);
        a->get("lasso_grid", c.lasso_grid);
        a->finish();
    }
    o.get("workers", c.workers);
    std::string out_dir, cache_dir;
    o.get("out_dir", out_dir);
    o.get("cache_dir", cache_dir);
    if (!out_dir.empty()) c.out_dir = resolve(base, out_dir);
    c.cache_dir = resolve(base, cache_dir);
    o.finish();
    return c;
}

} // namespace

json sim_json(const SimConfig& c) {
    json periods = json::array();
    for (const auto& p : c.periods)
        periods.push_back({{"drift_shift", p.drift_shift},
                           {"drift_lift", p.drift_lift},
                           {"drift_scale_sd", p.drift_scale_sd},
                           {"loading_sd", p.loading_sd},
                           {"noise_sd", p.noise_sd},
                           {"noise_bumps", p.noise_bumps}});
    const auto& b = c.bumps;
    const auto& l = c.outcome;
    return {{"n_participants", c.n_participants},
            {"visits", c.visits},
            {"days_per_visit", c.days_per_visit},
            {"minute_noise_cv", c.minute_noise_cv},
            {"day_sd", c.day_sd},
            {"control_stride", c.control_stride},
            {"sigma_v", c.sigma_v},
            {"n_steps", c.n_steps},
            {"seed", c.seed},
            {"bumps",
             {{"min_bumps", b.min_bumps},
              {"max_bumps", b.max_bumps},
              {"base_level", b.base_level},
              {"amplitude_mean", b.amplitude_mean},
              {"amplitude_sd", b.amplitude_sd},
              {"location_lo", b.location_lo},
              {"location_hi", b.location_hi},
              {"width_lo", b.width_lo},
              {"width_hi", b.width_hi}}},
            {"mode",
             {{"center", c.mode.center},
              {"width", c.mode.width},
              {"y_amplitude", c.mode.y_amplitude},
              {"x_amplitude", c.mode.x_amplitude}}},
            {"periods", periods},
            {"outcome",
             {{"intercept", l.intercept},
              {"beta_loading", l.beta_loading},
              {"beta_energy", l.beta_energy},
              {"beta_period", l.beta_period},
              {"beta_energy_period", l.beta_energy_period},
              {"beta_baseline", l.beta_baseline},
              {"beta_age", l.beta_age},
              {"baseline_mean", l.baseline_mean},
              {"baseline_sd", l.baseline_sd},
              {"random_sd", l.random_sd},
              {"noise_sd", l.noise_sd}}},
            {"missing",
             {{"outcome", c.missing.outcome},
              {"covariate", c.missing.covariate},
              {"wear_gap_day", c.missing.wear_gap_day},
              {"gap_min", c.missing.gap_min},
              {"gap_max", c.missing.gap_max}}}};
}

json pipeline_json(const PipelineConfig& c) {
    return {{"inputs",
             {{"minutes", c.minutes.string()},
              {"outcomes", c.outcomes.string()},
              {"covariates", c.covariates.string()},
              {"categorical_reference", c.categorical_reference}}},
            {"prep",
             {{"target_df", c.target_df},
              {"max_nonwear_minutes", c.day_rules.max_nonwear_minutes},
              {"min_wear_minutes", c.day_rules.min_wear_minutes},
              {"min_valid_days", c.day_rules.min_valid_days}}},
            {"kernel",
             {{"sigma_v", c.kernel.sigma_v},
              {"sigma_w", c.kernel.sigma_w},
              {"gamma_data", c.kernel.gamma_data},
              {"n_steps", c.kernel.n_steps},
              {"control_stride", c.kernel.control_stride}}},
            {"match",
             {{"max_iters", c.match.max_iters},
              {"rel_tol", c.match.rel_tol},
              {"max_backtracks", c.match.max_backtracks},
              {"armijo_c", c.match.armijo_c},
              {"backtrack_factor", c.match.backtrack_factor}}},
            {"fpca", {{"univariate_pve", c.univariate_pve}, {"multivariate_pve", c.multivariate_pve}}},
            {"assoc",
             {{"max_pcs", c.models.max_pcs},
              {"alpha", c.models.alpha},
              {"reml_report", c.models.reml_report},
              {"covariates", c.models.covariates},
              {"lasso", c.lasso},
              {"lasso_grid", c.lasso_grid}}},
            {"workers", c.workers},
            {"out_dir", c.out_dir.string()},
            {"cache_dir", c.cache_dir.string()}};
}

std::string to_json(const SimConfig& config) { return sim_json(config).dump(); }
std::string to_json(const PipelineConfig& config) { return pipeline_json(config).dump(); }

void PipelineConfig::validate() const {
    auto fail = [](const std::string& m) { throw InvalidInputError("pipeline config: " + m); };
    if (minutes.empty()) fail("inputs.minutes is required");
    if (outcomes.empty()) fail("inputs.outcomes is required");
    for (const auto* p : {&minutes, &outcomes, &covariates})
        if (!p->empty() && !std::filesystem::is_regular_file(*p)) fail("input file not found: " + p->string());
    kernel.validate();
    if (!(target_df > 2.0)) fail("prep.target_df must exceed 2");
    if (day_rules.min_valid_days < 1 || day_rules.max_nonwear_minutes < 1 || day_rules.min_wear_minutes < 1)
        fail("prep day rules must be positive");
    if (match.max_iters < 1 || !(match.rel_tol > 0.0) || match.max_backtracks < 1 ||
        !(match.armijo_c > 0.0 && match.armijo_c < 1.0) ||
        !(match.backtrack_factor > 0.0 && match.backtrack_factor < 1.0))
        fail("match options out of range");
    for (double v : {univariate_pve, multivariate_pve})
        if (!(v > 0.0 && v <= 1.0)) fail("fpca pve targets must lie in (0, 1]");
    if (models.max_pcs < 1) fail("assoc.max_pcs must be >= 1");
    if (!(models.alpha > 0.0 && models.alpha < 1.0)) fail("assoc.alpha must lie in (0, 1)");
    if (lasso_grid < 2) fail("assoc.lasso_grid must be >= 2");
    if (out_dir.empty()) fail("out_dir is required");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) fail("cannot create output directory " + out_dir.string() + ": " + ec.message());
    const auto probe = out_dir / ".write_probe";
    {
        std::ofstream f(probe);
        if (!f) fail("output directory is not writable: " + out_dir.string());
    }
    std::filesystem::remove(probe, ec);
}

Config parse_config(const std::string& text, const std::filesystem::path& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw InvalidInputError(std::string("config: ") + e.what());
    }
    Obj root(j, "config");
    Config c;
    if (auto s = root.sub("simulation")) c.simulation = read_sim(*s);
    if (auto p = root.sub("pipeline")) c.pipeline = read_pipeline(*p, base_dir);
    root.finish();
    return c;
}

Config load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInputError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.parent_path().empty() ? "." : path.parent_path());
}

std::filesystem::path cache_directory(const PipelineConfig& config) {
    if (const char* env = std::getenv("DIFFEO_PA_CACHE"); env && *env) return env;
    if (!config.cache_dir.empty()) return config.cache_dir;
    return config.out_dir / "cache";
}

} // namespace dpa::harness
