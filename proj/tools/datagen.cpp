// Generates synthetic benchmark datasets (ela.csv, configs.csv,
// performance.csv) for testing and demos.  `--fixtures DIR` regenerates the
// two bundled datasets: DIR/mini (2 problems x 2 instances x 4 variants) and
// DIR/mini_cv (same but 5 instances, enough for nested cross-validation).

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "perfgraph/errors.hpp"
#include "perfgraph/synth.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Synthetic dataset generator for perfgraph"};

    std::string out;
    std::string fixtures;
    std::string family = "modCMA";
    perfgraph::synth::DatasetOptions opt;

    app.add_option("--fixtures", fixtures,
                   "Write the bundled mini and mini_cv datasets under this directory");
    app.add_option("--out", out, "Output directory for a custom dataset");
    app.add_option("--family", family, "Algorithm family")
        ->check(CLI::IsMember({"modCMA", "modDE"}));
    app.add_option("--dimension", opt.dimension, "Problem dimension");
    app.add_option("--budgets", opt.budget_multipliers,
                   "Budget multipliers (repeatable or comma-separated)")
        ->delimiter(',');
    app.add_option("--problems", opt.num_problems, "Number of problems (1-24)");
    app.add_option("--instances", opt.num_instances, "Number of instances per problem (1-5)");
    app.add_option("--variants", opt.num_variants, "Number of variants (0 = full grid)");
    app.add_option("--seed", opt.seed, "Generator seed");
    app.add_option("--noise", opt.noise_sigma, "Measurement noise sigma");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (!fixtures.empty()) {
            perfgraph::synth::DatasetOptions mini;  // library defaults
            perfgraph::synth::write_csvs(std::filesystem::path(fixtures) / "mini",
                                         perfgraph::synth::make_dataset(mini));
            std::cout << "wrote " << fixtures << "/mini\n";

            perfgraph::synth::DatasetOptions mini_cv;
            mini_cv.num_instances = 5;
            perfgraph::synth::write_csvs(std::filesystem::path(fixtures) / "mini_cv",
                                         perfgraph::synth::make_dataset(mini_cv));
            std::cout << "wrote " << fixtures << "/mini_cv\n";
            return 0;
        }
        if (out.empty())
            throw perfgraph::ConfigError("either --out or --fixtures is required");
        opt.family = perfgraph::parse_family(family).value();
        perfgraph::synth::write_csvs(out, perfgraph::synth::make_dataset(opt));
        std::cout << "wrote " << out << "\n";
        return 0;
    } catch (const perfgraph::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 1;
    } catch (const perfgraph::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
