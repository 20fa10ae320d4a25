// Acceptance harness. Prints one line per criterion:
//   [PASS] / [FAIL] / [SKIP] <n> <title>: <details>
// With --criterion N only that criterion runs and the exit status is
// 0 pass, 1 fail, 77 skip. Without it every criterion runs and the status is
// 1 if any failed.
//
// Criteria that need the NASA C-MAPSS files read them from $TDDN_CMAPSS_DIR.
// The 200-epoch reproduction additionally requires TDDN_ACCEPT_FULL=1.

#include "../gradcheck.hpp"

#include "tddn/synthetic.hpp"
#include "tddn/tddn.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;
using namespace tddn;
using namespace tddn::testing;

namespace {

enum class Status { Pass, Fail, Skip };

struct Outcome {
    Status status;
    std::string detail;
};

Outcome pass(std::string d) { return {Status::Pass, std::move(d)}; }
Outcome fail(std::string d) { return {Status::Fail, std::move(d)}; }
Outcome skip(std::string d) { return {Status::Skip, std::move(d)}; }

template <typename... Args>
std::string cat(const Args&... a) {
    std::ostringstream os;
    os.precision(6);
    (os << ... << a);
    return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::optional<fs::path> data_dir() {
    if (const char* e = std::getenv("TDDN_CMAPSS_DIR"); e && *e) return fs::path(e);
    return std::nullopt;
}

const char* kNoData = "official C-MAPSS files not available (set TDDN_CMAPSS_DIR)";

std::optional<DatasetBundle> load_official(Subset s, std::string& why) {
    const auto dir = data_dir();
    if (!dir) {
        why = kNoData;
        return std::nullopt;
    }
    try {
        return load_subset(*dir, s);
    } catch (const std::exception& e) {
        why = e.what();
        return std::nullopt;
    }
}

// --- 1 ---------------------------------------------------------------------

double weighted(const Tensor& y, const Tensor& r) {
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
    return s;
}

Outcome gradient_correctness() {
    const auto t0 = std::chrono::steady_clock::now();
    GradCheckStats layers;
    std::size_t layer_draws = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed);
        { // conv
            const std::size_t B = 1 + seed % 3, T = 2 + seed % 7, C = 1 + seed % 4, L = 1 + seed % 5;
            Tensor x = random_tensor({B, T, C}, rng), f = random_tensor({L, 2, C}, rng), b = random_tensor({L}, rng);
            const Tensor r = random_tensor({B, T, L}, rng);
            Tensor df({L, 2, C}), db({L}), dx;
            conv1d_backward(x, f, r, df, db, &dx);
            auto loss = [&] { return weighted(conv1d(x, f, b), r); };
            check_gradient(loss, x, dx, layers);
            check_gradient(loss, f, df, layers);
            check_gradient(loss, b, db, layers);
        }
        { // linear
            const std::size_t B = 1 + seed % 4, din = 1 + seed % 6, dout = 1 + seed % 5;
            Tensor x = random_tensor({B, din}, rng), W = random_tensor({dout, din}, rng), b = random_tensor({dout}, rng);
            const Tensor r = random_tensor({B, dout}, rng);
            Tensor dW({dout, din}), db({dout}), dx;
            linear_backward(x, W, r, dW, db, &dx);
            auto loss = [&] { return weighted(linear(x, W, b), r); };
            check_gradient(loss, x, dx, layers);
            check_gradient(loss, W, dW, layers);
            check_gradient(loss, b, db, layers);
        }
        { // relu, tanh
            Tensor x = random_tensor({3, 7}, rng, -2, 2);
            const Tensor r = random_tensor({3, 7}, rng);
            auto pat = [&] {
                Pattern p;
                for (double v : x.values()) p.push_back(v > 0);
                return p;
            };
            check_gradient([&] { return weighted(relu(x), r); }, x, relu_backward(relu(x), r), layers, pat);
            check_gradient([&] { return weighted(tddn::tanh(x), r); }, x, tanh_backward(tddn::tanh(x), r), layers);
        }
        { // maxpool
            Tensor x = random_tensor({2, 2 + seed % 9, 3}, rng);
            const auto fwd = maxpool1d(x);
            const Tensor r = random_tensor(fwd.out.shape(), rng);
            const Tensor dx = maxpool1d_backward(fwd, x.shape(), r);
            auto pat = [&] {
                const auto f = maxpool1d(x);
                return Pattern(f.argmax.begin(), f.argmax.end());
            };
            check_gradient([&] { return weighted(maxpool1d(x).out, r); }, x, dx, layers, pat);
        }
        { // softmax, mse
            const std::size_t n = 1 + seed % 9;
            Tensor e = random_tensor({n}, rng, -3, 3);
            const Tensor r = random_tensor({n}, rng);
            Tensor de({n});
            softmax_backward(softmax(e.values()), r.values(), de.values());
            check_gradient([&] { return weighted(Tensor({n}, softmax(e.values())), r); }, e, de, layers);
            Tensor pred = random_tensor({n}, rng, -5, 5);
            const Tensor target = random_tensor({n}, rng, -5, 5);
            const Tensor g({n}, mse_loss(pred.values(), target.values()).grad);
            check_gradient([&] { return mse_loss(pred.values(), target.values()).value; }, pred, g, layers);
        }
        layer_draws += 6;
    }

    GradCheckStats model;
    const std::size_t model_draws = 100;
    for (std::uint64_t seed = 0; seed < model_draws; ++seed) {
        std::mt19937_64 rng(1000 + seed);
        auto p = random_params(tiny_config(seed), rng);
        const std::size_t B = 1 + seed % 3;
        const Tensor x = random_tensor({B, 8, 3}, rng);
        std::vector<double> r(B);
        for (auto& v : r) v = std::uniform_real_distribution<double>(-1, 1)(rng);
        const auto st = check_model_gradients(p, x, r);
        model.checked += st.checked;
        model.failed += st.failed;
        model.skipped_kinks += st.skipped_kinks;
        model.worst = std::max(model.worst, st.worst);
    }
    const double secs = seconds_since(t0);
    const auto detail = cat(layer_draws, " layer draws (", layers.checked, " coords, worst rel err ", layers.worst,
                            "), ", model_draws, " tiny-model draws w=8 m=3 (", model.checked, " coords, worst rel err ",
                            model.worst, ", ", model.skipped_kinks + layers.skipped_kinks,
                            " kink coords skipped), ", secs, " s");
    const bool ok = layers.failed == 0 && model.failed == 0 && secs < 60.0;
    return ok ? pass(detail) : fail(cat(layers.failed + model.failed, " mismatches; ", detail));
}

// --- 2 ---------------------------------------------------------------------

Outcome metric_oracles() {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> mag(0.0, 60.0);
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> d(1 + rng() % 200);
        for (auto& v : d) v = (rng() & 1 ? 1 : -1) * mag(rng);
        long double sq = 0, sc = 0;
        for (double v : d) {
            const long double x = v;
            sq += x * x;
            sc += x < 0 ? std::exp(-x / 13) - 1 : std::exp(x / 10) - 1;
        }
        const long double r = std::sqrt(sq / d.size());
        worst = std::max<double>(worst, std::abs(rmse(d) - r) / std::max<long double>(1, r));
        worst = std::max<double>(worst, std::abs(nasa_score(d) - sc) / std::max<long double>(1, sc));
    }
    int asym = 0;
    for (int x = 1; x <= 50; ++x) asym += nasa_score_term(x) > nasa_score_term(-x);
    const auto detail = cat("1000 vectors, worst rel deviation ", worst, "; asymmetry holds for ", asym, "/50");
    return worst <= 1e-12 && asym == 50 ? pass(detail) : fail(detail);
}

// --- 3 ---------------------------------------------------------------------

Outcome pipeline_invariants() {
    if (!data_dir()) return skip(kNoData);
    std::ostringstream d;
    std::size_t violations = 0;
    double worst_sum_dev = 0.0;
    for (Subset s : {Subset::FD001, Subset::FD002, Subset::FD003, Subset::FD004}) {
        std::string why;
        const auto b = load_official(s, why);
        if (!b) return fail(to_string(s) + ": " + why);
        if (auto m = check_official_counts(*b)) {
            ++violations;
            d << to_string(s) << ' ' << *m << "; ";
        }
        const auto sel = select_columns(s);
        const auto sc = fit_scaler(b->train, sel);
        TddnConfig mc;
        mc.m = sel.m();
        const auto p = init_params(mc);
        auto check_engine = [&](const EngineTrajectory& e, bool is_train) {
            const auto prep = prepare_engine(e, sc, sel, LabelPolicy{}, mc.window);
            if (prep.length() != e.length()) ++violations;
            if (is_train) {
                for (double v : prep.padded.values())
                    if (v < -1.0 || v > 1.0) ++violations;
            }
            for (std::size_t j = 0; j < prep.length(); j += 64) {
                const std::size_t B = std::min<std::size_t>(64, prep.length() - j);
                Tensor batch({B, mc.window, mc.m});
                for (std::size_t k = 0; k < B; ++k) prep.copy_window(j + k, batch.data() + k * mc.window * mc.m);
                const auto att = attention(p, abstract_features(p, conv_stack(p, batch)));
                for (std::size_t k = 0; k < B; ++k) {
                    double sum = 0;
                    for (std::size_t i = 0; i < mc.window; ++i) sum += att.lambda.at(k, i);
                    worst_sum_dev = std::max(worst_sum_dev, std::abs(sum - 1.0));
                }
            }
        };
        for (const auto& e : b->train) check_engine(e, true);
        for (const auto& e : b->test) check_engine(e, false);
        d << to_string(s) << ' ' << b->train.size() << '/' << b->test.size() << "; ";
    }
    d << "worst attention row-sum deviation " << worst_sum_dev;
    return violations == 0 && worst_sum_dev <= 1e-9 ? pass(d.str()) : fail(cat(violations, " violations; ", d.str()));
}

// --- 4 ---------------------------------------------------------------------

Outcome capacity_sanity() {
    std::string why;
    auto official = load_official(Subset::FD001, why);
    DatasetBundle b;
    std::string source;
    if (official) {
        b = std::move(*official);
        source = "FD001";
    } else {
        SyntheticSpec s;
        s.train_engines = 4;
        b = make_synthetic_bundle(s);
        source = "synthetic FD001-layout";
    }
    const auto sel = select_columns(Subset::FD001);
    const auto sc = fit_scaler(b.train, sel);
    const auto prep = prepare_engine(b.train[1], sc, sel, LabelPolicy{}, 64);
    std::ostringstream d;
    bool ok = true;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        TddnConfig c;
        c.seed = seed;
        auto p = init_params(c);
        Trainer tr(p, TrainConfig{});
        Tensor batch({10, 64, 15});
        std::vector<double> labels(10);
        const std::size_t n = prep.length();
        for (std::size_t i = 0; i < 10; ++i) {
            const std::size_t j = i * (n - 1) / 9;
            prep.copy_window(j, batch.data() + i * 64 * 15);
            labels[i] = prep.labels[j];
        }
        double loss = 0;
        std::size_t steps = 0;
        while (steps < 500 && !(steps > 0 && loss < 1.0)) {
            loss = tr.step(batch, labels, 1e-3);
            ++steps;
        }
        ok = ok && loss < 1.0;
        d << "seed " << seed << ": MSE " << loss << " after " << steps << " steps; ";
    }
    d << "Adam lr 1e-3, 10 windows of " << source;
    return ok ? pass(d.str()) : fail(d.str());
}

// --- 5, 6, 8 -----------------------------------------------------------------

struct RunResult {
    double rmse = 0, score = 0;
    std::size_t epochs = 0;
};

RunResult train_and_test(const DatasetBundle& b, std::size_t window, std::size_t epochs, std::uint64_t seed) {
    const auto sel = select_columns(b.subset);
    TddnConfig mc;
    mc.window = window;
    mc.m = sel.m();
    mc.seed = seed;
    TrainConfig tc;
    tc.max_epochs = epochs;
    tc.seed = seed;
    const auto out = train(b, mc, tc, sel, [&](const EpochLog& e) {
        std::cerr << "  w=" << window << " seed=" << seed << " epoch " << e.epoch << " train_loss=" << e.train_loss
                  << " val_rmse=" << e.val_rmse << '\n';
    });
    const auto rep = evaluate_test(out.params, b, out.scaler, sel, LabelPolicy{});
    return {rep.rmse, rep.score, out.report.epochs.size()};
}

Outcome baseline_beat() {
    std::string why;
    const auto b = load_official(Subset::FD001, why);
    if (!b) return skip(why);
    double sq = 0;
    for (int r : b->test_rul) {
        const double d = 120.0 - std::min(120.0, static_cast<double>(r));
        sq += d * d;
    }
    const double constant = std::sqrt(sq / b->test_rul.size());
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = train_and_test(*b, 64, 20, 0);
    const auto detail = cat("test RMSE ", r.rmse, " (score ", r.score, ") vs constant-120 RMSE ", constant,
                            ", 20 epochs, seed 0, ", seconds_since(t0), " s");
    return r.rmse <= 25.0 && r.rmse <= 0.6 * constant ? pass(detail) : fail(detail);
}

Outcome full_reproduction() {
    std::string why;
    const auto b = load_official(Subset::FD001, why);
    if (!b) return skip(why);
    const char* full = std::getenv("TDDN_ACCEPT_FULL");
    if (!full || std::string(full) != "1") return skip("200-epoch x 5-seed run disabled (set TDDN_ACCEPT_FULL=1)");
    double sum = 0;
    std::ostringstream d;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto r = train_and_test(*b, 64, 200, seed);
        sum += r.rmse;
        d << r.rmse << (seed < 4 ? "," : "");
    }
    const double mean = sum / 5;
    const auto detail = cat("mean FD001 test RMSE ", mean, " over seeds 0..4 (", d.str(), "), band <= 13");
    return mean <= 13.0 ? pass(detail) : fail(detail);
}

Outcome sweep_direction() {
    std::string why;
    const auto b = load_official(Subset::FD001, why);
    if (!b) return skip(why);
    std::ostringstream d;
    double mean16 = 0, mean64 = 0;
    for (std::size_t w : {16u, 32u, 48u, 64u}) {
        double sum = 0;
        for (std::uint64_t seed = 0; seed < 3; ++seed) sum += train_and_test(*b, w, 20, seed).rmse;
        d << "w=" << w << ": " << sum / 3 << "; ";
        if (w == 16) mean16 = sum / 3;
        if (w == 64) mean64 = sum / 3;
    }
    d << "20-epoch budget, seeds 0..2";
    return mean64 <= mean16 ? pass(d.str()) : fail(d.str());
}

// --- 7 ---------------------------------------------------------------------

int run_cli(const std::string& args, std::string& output) {
    const std::string cmd = std::string(TDDN_CLI_PATH) + " " + args + " 2>&1";
    FILE* p = ::popen(cmd.c_str(), "r");
    if (!p) return -1;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) output.append(buf, n);
    const int st = ::pclose(p);
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / ("tddn_accept7_" + std::to_string(::getpid()));
    fs::remove_all(root);
    std::string data, source, budget;
    if (auto dir = data_dir(); dir && fs::exists(*dir / "train_FD001.txt")) {
        data = dir->string();
        source = "FD001";
        budget = "--epochs 2";
    } else {
        SyntheticSpec s;
        s.train_engines = 10;
        s.test_engines = 6;
        write_bundle(root / "data", make_synthetic_bundle(s));
        data = (root / "data").string();
        source = "synthetic data";
        budget = "--epochs 3";
    }
    const auto a = root / "a", b = root / "b";
    std::string log;
    int rc = run_cli("train --subset FD001 --seed 7 " + budget + " --data " + data + " --out " + a.string(), log);
    if (rc == 0) rc = run_cli("evaluate --data " + data + " --out " + a.string(), log);
    if (rc == 0) rc = run_cli("train --config " + (a / "manifest.txt").string() + " --out " + b.string(), log);
    if (rc == 0) rc = run_cli("evaluate --data " + data + " --out " + b.string(), log);
    if (rc != 0) {
        fs::remove_all(root);
        return fail(cat("CLI exited with ", rc, ": ", log.substr(log.size() > 400 ? log.size() - 400 : 0)));
    }
    std::vector<std::string> differ;
    std::size_t bytes = 0;
    for (auto f : {"checkpoint.bin", "train_log.csv", "train_report.txt", "metrics.csv", "summary.csv"}) {
        const auto x = slurp(a / f), y = slurp(b / f);
        bytes += x.size();
        if (x.empty() || x != y) differ.push_back(f);
    }
    fs::remove_all(root);
    if (!differ.empty()) {
        std::string s;
        for (const auto& f : differ) s += f + " ";
        return fail("outputs differ: " + s);
    }
    return pass(cat("train+evaluate rerun from manifest on ", source, ": 5 artifacts (", bytes,
                    " bytes) bit-identical"));
}

struct Criterion {
    int id;
    const char* title;
    std::function<Outcome()> run;
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::vector<int> only;
    app.add_option("--criterion", only, "run only these criteria (1-8)");
    CLI11_PARSE(app, argc, argv);

    const std::vector<Criterion> all{
        {1, "gradient correctness", gradient_correctness},
        {2, "metric oracles", metric_oracles},
        {3, "pipeline invariants on official data", pipeline_invariants},
        {4, "capacity sanity (overfit 10 windows)", capacity_sanity},
        {5, "desk-scale baseline beat on FD001", baseline_beat},
        {6, "full-budget FD001 reproduction", full_reproduction},
        {7, "determinism", determinism},
        {8, "window sweep direction on FD001", sweep_direction},
    };
    int failures = 0, skips = 0, ran = 0;
    for (const auto& c : all) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
        ++ran;
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = fail(std::string("exception: ") + e.what());
        }
        const char* tag = o.status == Status::Pass ? "[PASS]" : o.status == Status::Fail ? "[FAIL]" : "[SKIP]";
        std::cout << tag << ' ' << c.id << ' ' << c.title << ": " << o.detail << std::endl;
        failures += o.status == Status::Fail;
        skips += o.status == Status::Skip;
    }
    if (ran == 0) {
        std::cerr << "no such criterion\n";
        return 2;
    }
    if (failures) return 1;
    if (ran == 1 && skips == 1) return 77;
    return 0;
}
