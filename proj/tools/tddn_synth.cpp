// Writes a synthetic fleet in the C-MAPSS file layout, for demos and smoke
// runs without the NASA files.

#include "tddn/synthetic.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Generate a synthetic C-MAPSS-format dataset"};
    tddn::SyntheticSpec spec;
    std::string out = "synthetic";
    std::string subset = "FD001";
    app.add_option("--out", out, "output directory")->capture_default_str();
    app.add_option("--subset", subset, "file name suffix and operating-condition mode")->capture_default_str();
    app.add_option("--train-engines", spec.train_engines)->capture_default_str();
    app.add_option("--test-engines", spec.test_engines)->capture_default_str();
    app.add_option("--min-life", spec.min_life)->capture_default_str();
    app.add_option("--max-life", spec.max_life)->capture_default_str();
    app.add_option("--min-test-length", spec.min_test_length)->capture_default_str();
    app.add_option("--noise", spec.noise)->capture_default_str();
    app.add_option("--seed", spec.seed)->capture_default_str();
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    try {
        spec.subset = tddn::parse_subset(subset);
        const auto b = tddn::make_synthetic_bundle(spec);
        tddn::write_bundle(out, b);
        std::cout << "wrote " << b.train.size() << " training and " << b.test.size() << " test engines to " << out
                  << '\n';
    } catch (const tddn::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
