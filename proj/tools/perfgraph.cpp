// perfgraph CLI: ingest | build | train | baseline | report, each driven by a
// run manifest.  Exit codes: 0 success, 1 data error, 2 configuration or
// usage error, 3 training failure.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <string>

#include "perfgraph/errors.hpp"
#include "perfgraph/manifest.hpp"
#include "perfgraph/runner.hpp"

namespace {

using CommandFn = void (*)(const perfgraph::RunManifest&, std::ostream&);

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Performance prediction for modular optimizer variants on "
                 "black-box benchmark problems"};
    app.require_subcommand(1);

    std::string manifest_path;
    std::string out_dir_override;

    struct Entry {
        const char* name;
        const char* help;
        CommandFn fn;
    };
    const Entry entries[] = {
        {"ingest", "Load and validate the input CSV files", &perfgraph::run_ingest},
        {"build", "Build and save one heterogeneous graph per spec", &perfgraph::run_build},
        {"train", "Nested cross-validation of the graph neural network", &perfgraph::run_train},
        {"baseline", "Random-forest baseline on the same folds", &perfgraph::run_baseline_cmd},
        {"report", "Aggregate results into summary.json and report.md", &perfgraph::run_report},
    };

    std::map<std::string, CommandFn> dispatch;
    for (const Entry& e : entries) {
        CLI::App* sub = app.add_subcommand(e.name, e.help);
        sub->add_option("--manifest", manifest_path, "Path to the run manifest file")->required();
        sub->add_option("--out-dir", out_dir_override,
                        "Override the manifest's output directory");
        dispatch[e.name] = e.fn;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        perfgraph::RunManifest manifest = perfgraph::parse_manifest(manifest_path);
        if (!out_dir_override.empty())
            manifest.out_dir =
                std::filesystem::absolute(out_dir_override).lexically_normal().string();
        std::filesystem::create_directories(manifest.out_dir);
        dispatch.at(app.get_subcommands().front()->get_name())(manifest, std::cout);
        return 0;
    } catch (const perfgraph::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 1;
    } catch (const perfgraph::TrainError& e) {
        std::cerr << "training error: " << e.what() << "\n";
        return 3;
    } catch (const perfgraph::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
