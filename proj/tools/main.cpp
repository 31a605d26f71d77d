#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dpa/errors.hpp"
#include "dpa/harness.hpp"

namespace fs = std::filesystem;
using namespace dpa;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 2;
constexpr int kNumeric = 3;

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::string out;
};

harness::Config load(const Flags& f) {
    harness::Config c = f.config.empty() ? harness::Config{} : harness::load_config(f.config);
    if (f.seed) {
        if (!c.simulation) c.simulation = harness::SimConfig{};
        c.simulation->seed = *f.seed;
    }
    if (f.workers) c.pipeline.workers = *f.workers;
    if (!f.out.empty()) c.pipeline.out_dir = f.out;
    return c;
}

// Simulates into <out>/sim when the config asks for a simulation and names
// no inputs. An existing simulation with the same settings is reused.
void simulate_inputs(harness::Config& c) {
    auto& p = c.pipeline;
    if (!p.minutes.empty() || !c.simulation) return;
    const fs::path dir = p.out_dir / "sim";
    const auto want = nlohmann::json::parse(harness::to_json(*c.simulation));
    bool fresh = true;
    if (std::ifstream in(dir / "truth.json"); in) {
        try {
            fresh = nlohmann::json::parse(in).at("config") != want;
        } catch (const std::exception&) {
        }
    }
    for (const char* f : {"minutes.csv", "outcomes.csv", "covariates.csv"})
        if (!fs::exists(dir / f)) fresh = true;
    if (fresh) {
        c.simulation->validate();
        harness::simulate_to_dir(*c.simulation, dir, p.workers);
        std::cerr << "simulated " << c.simulation->n_participants << " participants into " << dir.string() << '\n';
    }
    p.minutes = dir / "minutes.csv";
    p.outcomes = dir / "outcomes.csv";
    p.covariates = dir / "covariates.csv";
    if (!p.categorical_reference.count("site")) p.categorical_reference["site"] = "A";
}

void print_stages(const harness::PipelineResult& r) {
    for (const auto& s : r.stages)
        std::cout << s.name << ": " << s.status << " (" << s.seconds << " s)\n";
    std::cout << "artifacts in " << r.out_dir.string() << '\n';
}

int pipeline(const Flags& f, harness::Stage last, bool report) {
    harness::Config c = load(f);
    simulate_inputs(c);
    const auto r = harness::run_pipeline(c.pipeline, last);
    if (report) {
        std::ifstream in(r.out_dir / "report.txt");
        std::cout << in.rdbuf();
    } else {
        print_stages(r);
    }
    return kOk;
}

int simulate(const Flags& f) {
    harness::Config c = load(f);
    const harness::SimConfig sim = c.simulation.value_or(harness::SimConfig{});
    sim.validate();
    const fs::path dir = f.out.empty() ? c.pipeline.out_dir / "sim" : fs::path(f.out);
    const auto files = harness::simulate_to_dir(sim, dir, c.pipeline.workers);
    std::cout << "wrote " << files.minutes.string() << ", " << files.outcomes.string() << ", "
              << files.covariates.string() << ", " << files.truth.string() << '\n';
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Diurnal physical-activity deformation analysis"};
    app.require_subcommand(1);
    Flags flags;
    auto add_flags = [&](CLI::App* s) {
        s->add_option("--config", flags.config, "JSON config file")->check(CLI::ExistingFile);
        s->add_option("--seed", flags.seed, "Simulation seed");
        s->add_option("--workers", flags.workers, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
        s->add_option("--out", flags.out, "Output directory");
    };
    struct Cmd {
        const char* name;
        const char* help;
        harness::Stage last;
        bool report;
    };
    const Cmd cmds[] = {
        {"prep", "Valid days, daily profiles, smoothing and scaling", harness::Stage::Prep, false},
        {"match", "Per-period curve matching", harness::Stage::Match, false},
        {"mfpca", "Per-period multivariate FPCA", harness::Stage::Mfpca, false},
        {"assoc", "Feature assembly and mixed models", harness::Stage::Assoc, false},
        {"run", "Full pipeline including plot data", harness::Stage::Plots, false},
        {"report", "Print the model report (runs missing stages)", harness::Stage::Assoc, true},
    };
    CLI::App* sim = app.add_subcommand("simulate", "Write a synthetic cohort");
    add_flags(sim);
    std::vector<std::pair<CLI::App*, const Cmd*>> subs;
    for (const auto& c : cmds) {
        CLI::App* s = app.add_subcommand(c.name, c.help);
        add_flags(s);
        subs.emplace_back(s, &c);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kValidation;
    }

    try {
        if (sim->parsed()) return simulate(flags);
        for (const auto& [s, c] : subs)
            if (s->parsed()) return pipeline(flags, c->last, c->report);
    } catch (const harness::StageError& e) {
        std::cerr << "error in stage " << e.stage() << ": " << e.what() << '\n';
        if (!e.participants().empty()) {
            std::cerr << "participants:";
            for (const auto& p : e.participants()) std::cerr << ' ' << p;
            std::cerr << '\n';
        }
        return e.numeric() ? kNumeric : kValidation;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidation;
    }
    return kValidation;
}
