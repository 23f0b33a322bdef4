// gencal: dataset generation, training runs, ablation and imbalance sweeps.
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gencal/config.hpp"
#include "gencal/data.hpp"
#include "gencal/pipeline.hpp"
#include "gencal/report.hpp"

namespace fs = std::filesystem;
using namespace gencal;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitAbort = 3;

unsigned thread_cap() {
    const char* env = std::getenv("GCC_THREADS");
    if (!env || !*env) return 1;
    try {
        const long v = std::stol(env);
        return v < 1 ? 1u : static_cast<unsigned>(v);
    } catch (const std::exception&) {
        throw ConfigError("GCC_THREADS must be a positive integer, got '" + std::string(env) + "'");
    }
}

TrainConfig load_with_overrides(const std::string& path, const std::vector<std::string>& overrides) {
    TrainConfig cfg = path.empty() ? TrainConfig{} : load_config(path);
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        auto trim = [](std::string s) {
            s.erase(0, s.find_first_not_of(" \t"));
            s.erase(s.find_last_not_of(" \t") + 1);
            return s;
        };
        set_config_value(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
}

ImbalanceSpec parse_fractions(const std::string& text) {
    ImbalanceSpec spec;
    std::istringstream is(text);
    std::string item;
    while (std::getline(is, item, ',')) {
        try {
            std::size_t used = 0;
            spec.keep_fraction.push_back(std::stod(item, &used));
            if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError("--fractions: not a number: '" + item + "'");
        }
    }
    return spec;
}

void print_metrics(const std::string& name, const MetricsRecord& m) {
    std::cout << name << ": acc=" << format_double(m.acc) << " nmi=" << format_double(m.nmi)
              << " ari=" << format_double(m.ari) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Generative calibration clustering on synthetic data"};
    app.require_subcommand(1);

    std::string kind = "blobs", out_path;
    int k = 4;
    std::size_t per_class = 100, dim = 8, side = 8;
    std::uint64_t seed = 0;
    double separation = 8.0, noise = 0.3;
    auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset as CSV");
    gen->add_option("--kind", kind, "blobs, rings or glyphs")->capture_default_str();
    gen->add_option("--k", k, "number of classes")->capture_default_str();
    gen->add_option("--per-class", per_class)->capture_default_str();
    gen->add_option("--seed", seed)->capture_default_str();
    gen->add_option("--dim", dim, "blob dimension")->capture_default_str();
    gen->add_option("--separation", separation)->capture_default_str();
    gen->add_option("--side", side, "glyph side length")->capture_default_str();
    gen->add_option("--noise", noise)->capture_default_str();
    gen->add_option("--out", out_path)->required();

    std::string config_path, out_dir, fractions;
    std::vector<std::string> overrides;
    auto add_run_flags = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "key = value config file");
        sub->add_option("--set", overrides, "override one key (key=value)");
        sub->add_option("--out-dir", out_dir)->required();
    };
    auto* run = app.add_subcommand("run", "Train and evaluate one configuration");
    add_run_flags(run);
    auto* ablate = app.add_subcommand("ablate", "Full model plus the three single-loss ablations");
    add_run_flags(ablate);
    auto* imbalance = app.add_subcommand("imbalance", "Balanced versus imbalanced training set");
    add_run_flags(imbalance);
    imbalance->add_option("--fractions", fractions, "comma-separated keep fraction per class")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*gen) {
            const DatasetKind dk = parse_dataset_kind(kind);
            Dataset d;
            switch (dk) {
                case DatasetKind::blobs: d = make_blobs(k, per_class, dim, separation, seed); break;
                case DatasetKind::rings: d = make_rings(k, per_class, separation, noise, seed); break;
                case DatasetKind::glyphs: d = make_glyphs(k, per_class, side, noise, seed); break;
            }
            write_csv(fs::path(out_path), d.samples, d.labels);
            std::cout << "wrote " << d.size() << " samples to " << out_path << "\n";
            return 0;
        }

        const TrainConfig cfg = load_with_overrides(config_path, overrides);
        const fs::path dir(out_dir);
        if (*run) {
            const ExperimentResult res = run_experiment(cfg);
            write_run_outputs(dir, res);
            for (const auto& c : res.report.checkpoints) print_metrics(c.name, c.metrics);
            return 0;
        }
        if (*ablate) {
            const auto arms = run_ablation(cfg, thread_cap());
            fs::create_directories(dir);
            for (const auto& arm : arms) {
                const std::string variant = ablation_name(arm.report);
                write_run_outputs(dir / variant, arm);
                print_metrics(variant, arm.report.final_metrics);
            }
            write_text(dir / "summary.csv", summary_csv(arms));
            return 0;
        }
        if (*imbalance) {
            const ImbalanceOutcome o = run_imbalance(cfg, parse_fractions(fractions), thread_cap());
            write_run_outputs(dir / "balanced", o.balanced);
            write_run_outputs(dir / "imbalanced", o.imbalanced);
            write_text(dir / "delta.json", delta_json(o));
            print_metrics("balanced", o.balanced.report.final_metrics);
            print_metrics("imbalanced", o.imbalanced.report.final_metrics);
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::out_of_range& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const TrainingAborted& e) {
        std::cerr << "aborted: " << e.what() << "\n";
        return kExitAbort;
    } catch (const std::exception& e) {
        std::cerr << "aborted: " << e.what() << "\n";
        return kExitAbort;
    }
    return 0;
}
