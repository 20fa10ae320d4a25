// tddn: train, evaluate, sweep and inspect the degradation network on
// C-MAPSS-format data.
//
// Exit status: 0 success, 1 runtime failure, 2 usage or configuration error.

#include "tddn/tddn.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using namespace tddn;

namespace {

constexpr const char* kToolVersion = "1.0.0";

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string subset = "FD001";
    std::string data;
    std::string out = "runs/latest";
    std::uint64_t seed = 0;
    std::size_t window = 64;
    std::size_t depth = 3;
    std::size_t epochs = 200;
    std::size_t batch = 32;
    double lr = 1e-4;
    std::size_t patience = 10;
    double rmax = 120.0;
    double val_fraction = 0.2;
    bool include_sensor_14 = false;
    bool no_cap_true_rul = false;
    std::size_t repeats = 5;
    std::string checkpoint;
    int engine = 1;
    std::string split = "train";
    std::string dim = "window";
    std::string values;
    std::string train_file, test_file, rul_file;
};

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

/// Resolved configuration as key=value lines; readable back through --config.
/// Train owns manifest.txt; other commands get their own file so that an
/// evaluate into the training directory keeps the training manifest intact.
void write_manifest(const std::string& command, const Options& o, const std::vector<std::string>& keys) {
    fs::create_directories(o.out);
    std::map<std::string, std::string> kv{
        {"subset", o.subset},
        {"data", o.data},
        {"out", o.out},
        {"seed", std::to_string(o.seed)},
        {"window", std::to_string(o.window)},
        {"depth", std::to_string(o.depth)},
        {"epochs", std::to_string(o.epochs)},
        {"batch", std::to_string(o.batch)},
        {"lr", fmt(o.lr)},
        {"patience", std::to_string(o.patience)},
        {"rmax", fmt(o.rmax)},
        {"val-fraction", fmt(o.val_fraction)},
        {"include-sensor-14", o.include_sensor_14 ? "true" : "false"},
        {"no-cap-true-rul", o.no_cap_true_rul ? "true" : "false"},
        {"repeats", std::to_string(o.repeats)},
        {"checkpoint", o.checkpoint},
        {"engine", std::to_string(o.engine)},
        {"split", o.split},
        {"dim", o.dim},
        {"values", o.values},
        {"train-file", o.train_file},
        {"test-file", o.test_file},
        {"rul-file", o.rul_file},
    };
    const std::string name = command == "train" ? "manifest.txt" : "manifest_" + command + ".txt";
    std::ofstream f(fs::path(o.out) / name);
    f << "# command=" << command << "\n# tool_version=" << kToolVersion << '\n';
    for (const auto& k : keys) {
        const auto& v = kv.at(k);
        if (!v.empty()) f << k << '=' << v << '\n';
    }
    if (!f) throw IoError("cannot write manifest in '" + o.out + "'");
}

const std::vector<std::string> kTrainKeys{"subset", "data",     "out",  "seed",         "window",
                                          "depth",  "epochs",   "batch", "lr",          "patience",
                                          "rmax",   "val-fraction", "include-sensor-14", "train-file", "test-file",
                                          "rul-file"};

DatasetBundle load_data(const Options& o, Subset s) {
    if (o.data.empty()) throw UsageError("--data is required");
    if (!fs::is_directory(o.data)) throw UsageError("data directory '" + o.data + "' does not exist");
    SubsetFiles ov;
    if (!o.train_file.empty()) ov.train = o.train_file;
    if (!o.test_file.empty()) ov.test = o.test_file;
    if (!o.rul_file.empty()) ov.rul = o.rul_file;
    auto b = load_subset(o.data, s, ov);
    if (auto msg = check_official_counts(b)) std::cerr << "note: " << *msg << '\n';
    return b;
}

TddnConfig model_config(const Options& o, std::size_t m, std::uint64_t seed) {
    TddnConfig c;
    c.window = o.window;
    c.m = m;
    c.conv_channels = default_conv_channels(o.depth);
    c.seed = seed;
    c.validate();
    return c;
}

TrainConfig train_config(const Options& o, std::uint64_t seed) {
    TrainConfig t;
    t.batch_size = o.batch;
    t.max_epochs = o.epochs;
    t.lr = o.lr;
    t.patience = o.patience;
    t.val_fraction = o.val_fraction;
    t.r_max = o.rmax;
    t.seed = seed;
    t.validate();
    return t;
}

void warn_degenerate(const Scaler& s, const SensorSelection& sel) {
    for (auto k : s.degenerate_columns())
        std::cerr << "warning: column " << sel.columns[k].name() << " is constant in the training data; scaled to 0\n";
}

template <typename F>
void write_file(const fs::path& p, F&& body) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot write '" + p.string() + "'");
    body(f);
    if (!f) throw IoError("short write to '" + p.string() + "'");
}

TrainOutcome run_training(const Options& o, const DatasetBundle& b, const SensorSelection& sel, std::uint64_t seed,
                          bool verbose) {
    const auto mc = model_config(o, sel.m(), seed);
    const auto tc = train_config(o, seed);
    return train(b, mc, tc, sel, [&](const EpochLog& e) {
        if (verbose)
            std::cerr << "epoch " << e.epoch << " lr=" << e.lr << " train_loss=" << e.train_loss
                      << " val_rmse=" << e.val_rmse << '\n';
    });
}

int cmd_train(const Options& o) {
    const Subset s = parse_subset(o.subset);
    model_config(o, select_columns(s, o.include_sensor_14).m(), o.seed);
    train_config(o, o.seed);
    write_manifest("train", o, kTrainKeys);
    const auto bundle = load_data(o, s);
    const auto sel = select_columns(s, o.include_sensor_14);
    warn_degenerate(fit_scaler(bundle.train, sel), sel);

    const auto out = run_training(o, bundle, sel, o.seed, true);
    const TrainedModel tm{out.params, out.scaler, sel, LabelPolicy{o.rmax}};
    const fs::path dir(o.out);
    write_checkpoint(dir / "checkpoint.bin", make_checkpoint(tm));
    write_file(dir / "train_log.csv", [&](std::ostream& f) { write_train_log_csv(f, out.report); });
    write_file(dir / "train_report.txt", [&](std::ostream& f) {
        const auto& r = out.report;
        f.precision(17);
        f << "epochs_run=" << r.epochs.size() << "\nbest_epoch=" << r.best_epoch << "\nbest_val_rmse=" << r.best_val_rmse
          << "\nstop_reason=" << to_string(r.stop_reason) << "\ntrain_engines=";
        for (std::size_t i = 0; i < r.train_ids.size(); ++i) f << (i ? "," : "") << r.train_ids[i];
        f << "\nval_engines=";
        for (std::size_t i = 0; i < r.val_ids.size(); ++i) f << (i ? "," : "") << r.val_ids[i];
        f << '\n';
    });
    std::cout << "best_epoch=" << out.report.best_epoch << " best_val_rmse=" << out.report.best_val_rmse
              << " checkpoint=" << (dir / "checkpoint.bin").string() << '\n';
    return 0;
}

std::string checkpoint_path(const Options& o) {
    return o.checkpoint.empty() ? (fs::path(o.out) / "checkpoint.bin").string() : o.checkpoint;
}

TrainedModel load_trained(const Options& o, const CLI::App& app) {
    auto tm = from_checkpoint(read_checkpoint(checkpoint_path(o)));
    if (app.count("--subset") && parse_subset(o.subset) != tm.selection.subset) {
        throw UsageError("checkpoint was trained on " + to_string(tm.selection.subset) + " but --subset is " +
                         o.subset);
    }
    return tm;
}

int cmd_evaluate(const Options& o, const CLI::App& app) {
    write_manifest("evaluate", o, {"subset", "data", "out", "checkpoint", "no-cap-true-rul", "train-file", "test-file", "rul-file"});
    const auto tm = load_trained(o, app);
    const auto bundle = load_data(o, tm.selection.subset);
    const auto rep = evaluate_test(tm.params, bundle, tm.scaler, tm.selection, tm.policy, !o.no_cap_true_rul);
    const fs::path dir(o.out);
    write_file(dir / "metrics.csv", [&](std::ostream& f) { write_metrics_csv(f, rep); });
    write_file(dir / "summary.csv", [&](std::ostream& f) { write_summary_csv(f, rep); });
    std::cout.precision(6);
    std::cout << "rmse=" << rep.rmse << " score=" << rep.score << " engines=" << rep.count() << '\n';
    return 0;
}

std::vector<std::size_t> parse_value_list(const std::string& s) {
    if (s.empty()) throw UsageError("--values is required for sweep");
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        std::size_t pos = 0;
        long long v = 0;
        try {
            v = std::stoll(tok, &pos);
        } catch (const std::exception&) {
            throw UsageError("bad sweep value '" + tok + "'");
        }
        if (pos != tok.size() || v < 1) throw UsageError("sweep values must be positive integers, got '" + tok + "'");
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

int cmd_sweep(const Options& o) {
    if (o.dim != "window" && o.dim != "depth") throw UsageError("--dim must be 'window' or 'depth'");
    if (o.repeats < 1) throw UsageError("--repeats must be >= 1");
    const auto values = parse_value_list(o.values);
    const Subset s = parse_subset(o.subset);
    const auto sel = select_columns(s, o.include_sensor_14);
    for (auto v : values) { // reject invalid values before any compute
        Options trial = o;
        (o.dim == "window" ? trial.window : trial.depth) = v;
        model_config(trial, sel.m(), o.seed);
    }
    train_config(o, o.seed);
    auto keys = kTrainKeys;
    keys.insert(keys.end(), {"dim", "values", "repeats", "no-cap-true-rul"});
    write_manifest("sweep", o, keys);
    const auto bundle = load_data(o, s);

    std::ofstream f(fs::path(o.out) / "sweep.csv");
    f.precision(17);
    f << o.dim << ",repeats,rmse_mean,score_mean,time_mean_s";
    for (std::size_t r = 0; r < o.repeats; ++r) f << ",rmse_" << r + 1;
    for (std::size_t r = 0; r < o.repeats; ++r) f << ",score_" << r + 1;
    f << '\n';
    for (auto v : values) {
        Options run = o;
        (o.dim == "window" ? run.window : run.depth) = v;
        std::vector<double> rm, sc;
        double secs = 0.0;
        for (std::size_t r = 0; r < o.repeats; ++r) {
            const std::uint64_t seed = o.seed + r;
            const auto t0 = std::chrono::steady_clock::now();
            const auto out = run_training(run, bundle, sel, seed, false);
            const auto rep = evaluate_test(out.params, bundle, out.scaler, sel, LabelPolicy{o.rmax}, !o.no_cap_true_rul);
            secs += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            rm.push_back(rep.rmse);
            sc.push_back(rep.score);
            std::cerr << o.dim << '=' << v << " seed=" << seed << " rmse=" << rep.rmse << " score=" << rep.score
                      << " epochs=" << out.report.epochs.size() << '\n';
        }
        double rsum = 0, ssum = 0;
        for (std::size_t r = 0; r < o.repeats; ++r) {
            rsum += rm[r];
            ssum += sc[r];
        }
        const double n = static_cast<double>(o.repeats);
        f << v << ',' << o.repeats << ',' << rsum / n << ',' << ssum / n << ',' << secs / n;
        for (double x : rm) f << ',' << x;
        for (double x : sc) f << ',' << x;
        f << '\n';
        f.flush();
    }
    if (!f) throw IoError("cannot write sweep.csv");
    return 0;
}

int cmd_export(const Options& o, const CLI::App& app) {
    if (o.split != "train" && o.split != "test") throw UsageError("--split must be 'train' or 'test'");
    write_manifest("export-features", o, {"subset", "data", "out", "checkpoint", "engine", "split", "train-file", "test-file", "rul-file"});
    const auto tm = load_trained(o, app);
    const auto bundle = load_data(o, tm.selection.subset);
    const auto& pool = o.split == "train" ? bundle.train : bundle.test;
    const auto it = std::find_if(pool.begin(), pool.end(), [&](const EngineTrajectory& e) { return e.unit_id == o.engine; });
    if (it == pool.end()) {
        throw StructuralError("engine " + std::to_string(o.engine) + " is not present in the " + o.split + " file");
    }
    const auto prep = prepare_engine(*it, tm.scaler, tm.selection, tm.policy, tm.params.config.window);
    const fs::path dir(o.out);
    std::ofstream tf(dir / "temporal_features.csv"), af(dir / "abstract_features.csv"), lf(dir / "attention_weights.csv");
    for (auto* s : {&tf, &af, &lf}) s->precision(17);
    const std::size_t w = tm.params.config.window;
    const std::size_t L = tm.params.config.temporal_channels(), T = tm.params.config.temporal_length();
    tf << "j,k";
    for (std::size_t c = 0; c < L; ++c) tf << ",f" << c + 1;
    af << "j,i";
    for (const auto& c : tm.selection.columns) af << ',' << c.name();
    lf << "j";
    for (std::size_t i = 0; i < w; ++i) lf << ",lambda" << i + 1;
    tf << '\n';
    af << '\n';
    lf << '\n';
    for (std::size_t j = 0; j < prep.length(); ++j) {
        const auto pr = forward(tm.params, prep.sample(j).window);
        for (std::size_t k = 0; k < T; ++k) {
            tf << j + 1 << ',' << k + 1;
            for (std::size_t c = 0; c < L; ++c) tf << ',' << pr.diag.temporal.at(k, c);
            tf << '\n';
        }
        for (std::size_t i = 0; i < w; ++i) {
            af << j + 1 << ',' << i + 1;
            for (std::size_t c = 0; c < tm.selection.m(); ++c) af << ',' << pr.diag.abstract.at(i, c);
            af << '\n';
        }
        lf << j + 1;
        for (std::size_t i = 0; i < w; ++i) lf << ',' << pr.diag.lambda[i];
        lf << '\n';
    }
    if (!tf || !af || !lf) throw IoError("failed writing feature CSVs in '" + o.out + "'");
    std::cout << "engine=" << o.engine << " windows=" << prep.length() << " out=" << o.out << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Temporal deep degradation network for remaining-useful-life prediction"};
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);
    app.set_config("--config", "", "flat key=value file; command-line flags take precedence");
    app.allow_config_extras(CLI::config_extras_mode::ignore);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    Options o;
    app.add_option("--subset", o.subset, "FD001..FD004")->capture_default_str();
    app.add_option("--data", o.data, "directory holding train_FDxxx.txt, test_FDxxx.txt, RUL_FDxxx.txt");
    app.add_option("--out", o.out, "output directory")->capture_default_str();
    app.add_option("--seed", o.seed, "initialization / shuffle / split seed")->capture_default_str();
    app.add_option("--window", o.window, "window length w")->capture_default_str();
    app.add_option("--depth", o.depth, "number of conv+pool stages")->capture_default_str();
    app.add_option("--epochs", o.epochs, "maximum epochs")->capture_default_str();
    app.add_option("--batch", o.batch, "minibatch size")->capture_default_str();
    app.add_option("--lr", o.lr, "initial learning rate")->capture_default_str();
    app.add_option("--patience", o.patience, "early-stopping patience (epochs)")->capture_default_str();
    app.add_option("--rmax", o.rmax, "RUL cap")->capture_default_str();
    app.add_option("--val-fraction", o.val_fraction, "fraction of training engines held out")->capture_default_str();
    app.add_flag("--include-sensor-14", o.include_sensor_14, "keep sensor 14 in the FD001/FD003 selection");
    app.add_flag("--no-cap-true-rul", o.no_cap_true_rul, "evaluate against uncapped test RUL");
    app.add_option("--repeats", o.repeats, "independent seeds per sweep value")->capture_default_str();
    app.add_option("--checkpoint", o.checkpoint, "checkpoint path (default <out>/checkpoint.bin)");
    app.add_option("--engine", o.engine, "engine id for export-features")->capture_default_str();
    app.add_option("--split", o.split, "train or test, for export-features")->capture_default_str();
    app.add_option("--dim", o.dim, "sweep dimension: window or depth")->capture_default_str();
    app.add_option("--values", o.values, "comma-separated sweep values");
    app.add_option("--train-file", o.train_file, "explicit training file");
    app.add_option("--test-file", o.test_file, "explicit test file");
    app.add_option("--rul-file", o.rul_file, "explicit RUL file");

    auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
    auto* eval_cmd = app.add_subcommand("evaluate", "last-cycle test evaluation of a checkpoint");
    auto* sweep_cmd = app.add_subcommand("sweep", "train across window sizes or depths");
    auto* export_cmd = app.add_subcommand("export-features", "per-window temporal/abstract features and attention");
    for (auto* sc : {train_cmd, eval_cmd, sweep_cmd, export_cmd}) sc->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*train_cmd) return cmd_train(o);
        if (*eval_cmd) return cmd_evaluate(o, app);
        if (*sweep_cmd) return cmd_sweep(o);
        return cmd_export(o, app);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
