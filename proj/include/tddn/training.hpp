#pragma once

// Engine-level validation split, Adam, the step learning-rate schedule,
// early stopping on validation RMSE, and the epoch loop.

#include "tddn/metrics.hpp"
#include "tddn/model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace tddn {

struct TrainConfig {
    std::size_t batch_size = 32;
    std::size_t max_epochs = 200;
    double lr = 1e-4;
    std::size_t lr_drop_epoch = 100; // reduced rate applies from the next epoch on
    double lr_drop_factor = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t patience = 10;
    double val_fraction = 0.2;
    std::uint64_t seed = 0;
    double r_max = 120.0;

    void validate() const {
        if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("validation fraction must lie in (0, 1)");
        if (patience < 1) throw ConfigError("patience must be >= 1");
        if (batch_size < 1) throw ConfigError("batch size must be >= 1");
        if (max_epochs < 1) throw ConfigError("max epochs must be >= 1");
        if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
        if (!(r_max > 0.0)) throw ConfigError("R_max must be positive");
    }
};

inline double lr_at(std::size_t epoch, const TrainConfig& cfg) {
    if (epoch < 1) throw ConfigError("epochs are 1-based");
    return epoch <= cfg.lr_drop_epoch ? cfg.lr : cfg.lr * cfg.lr_drop_factor;
}

struct EngineSplit {
    std::vector<int> train_ids;
    std::vector<int> val_ids;
};

/// Random engine-level split; |validation| = round(fraction * count).
inline EngineSplit split_engines(const std::vector<int>& unit_ids, double fraction, std::uint64_t seed) {
    if (unit_ids.size() < 2) throw ConfigError("need at least two engines to split");
    const auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(unit_ids.size())));
    if (n_val == 0 || n_val >= unit_ids.size()) {
        throw ConfigError("validation fraction " + std::to_string(fraction) + " leaves one side of the split empty");
    }
    std::vector<int> ids = unit_ids;
    std::mt19937_64 rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);
    EngineSplit s;
    s.val_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
    s.train_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_val), ids.end());
    std::sort(s.val_ids.begin(), s.val_ids.end());
    std::sort(s.train_ids.begin(), s.train_ids.end());
    return s;
}

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::uint64_t step = 0;

    static AdamState for_params(const std::vector<Param>& params) {
        AdamState s;
        for (const auto& p : params) {
            s.m.emplace_back(p.value.shape());
            s.v.emplace_back(p.value.shape());
        }
        return s;
    }
};

/// One bias-corrected Adam update from the gradients held in each Param,
/// applied in list order.
inline void adam_step(std::vector<Param>& params, AdamState& state, double lr, const TrainConfig& cfg) {
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ShapeError("adam_step: optimizer state does not match parameter list");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (state.m[i].shape() != params[i].value.shape() || params[i].grad.shape() != params[i].value.shape()) {
            throw ShapeError("adam_step: shape mismatch for '" + params[i].name + "'");
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        double* w = params[i].value.data();
        const double* g = params[i].grad.data();
        double* m = state.m[i].data();
        double* v = state.v[i].data();
        for (std::size_t k = 0; k < params[i].value.size(); ++k) {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            const double mhat = m[k] / c1;
            const double vhat = v[k] / c2;
            w[k] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

/// Tracks the best validation value; any strict decrease counts as improvement.
class EarlyStopping {
public:
    explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

    /// Returns true when this epoch is the new best.
    bool update(std::size_t epoch, double value) {
        if (std::isfinite(value) && value < best_) {
            best_ = value;
            best_epoch_ = epoch;
            since_best_ = 0;
            return true;
        }
        ++since_best_;
        return false;
    }

    bool should_stop() const { return since_best_ >= patience_; }
    double best() const { return best_; }
    std::size_t best_epoch() const { return best_epoch_; }

private:
    std::size_t patience_;
    double best_ = std::numeric_limits<double>::infinity();
    std::size_t best_epoch_ = 0;
    std::size_t since_best_ = 0;
};

/// Gradient step on one minibatch of windows.
class Trainer {
public:
    Trainer(TddnParams& params, const TrainConfig& cfg)
        : params_(params), cfg_(cfg), adam_(AdamState::for_params(params.list)) {}

    /// Returns the batch MSE before the update.
    double step(const Tensor& windows, std::span<const double> labels, double lr) {
        params_.zero_grad();
        ForwardTrace trace;
        const auto pred = forward_batch(params_, windows, &trace);
        const auto loss = mse_loss(pred, labels);
        if (!std::isfinite(loss.value)) throw NumericError("non-finite training loss");
        backward(trace, params_, loss.grad);
        adam_step(params_.list, adam_, lr, cfg_);
        return loss.value;
    }

    const AdamState& optimizer_state() const { return adam_; }

private:
    TddnParams& params_;
    TrainConfig cfg_;
    AdamState adam_;
};

struct EpochLog {
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_rmse = 0.0;
    std::size_t batches = 0;
    std::size_t samples = 0;
};

enum class StopReason { Patience, MaxEpochs };

inline const char* to_string(StopReason r) {
    return r == StopReason::Patience ? "patience" : "max_epochs";
}

struct TrainReport {
    std::vector<EpochLog> epochs;
    std::size_t best_epoch = 0;
    double best_val_rmse = 0.0;
    StopReason stop_reason = StopReason::MaxEpochs;
    std::vector<int> train_ids;
    std::vector<int> val_ids;
};

inline void write_train_log_csv(std::ostream& out, const TrainReport& rep) {
    out.precision(17);
    out << "epoch,lr,train_loss,val_rmse,batches\n";
    for (const auto& e : rep.epochs)
        out << e.epoch << ',' << e.lr << ',' << e.train_loss << ',' << e.val_rmse << ',' << e.batches << '\n';
}

/// Window references into a set of prepared engines.
struct SampleRef {
    std::uint32_t engine;
    std::uint32_t cycle; // 0-based window index
};

inline std::vector<SampleRef> enumerate_samples(const std::vector<PreparedEngine>& engines) {
    std::vector<SampleRef> out;
    for (std::size_t e = 0; e < engines.size(); ++e)
        for (std::size_t j = 0; j < engines[e].length(); ++j)
            out.push_back({static_cast<std::uint32_t>(e), static_cast<std::uint32_t>(j)});
    return out;
}

/// RMSE of raw predictions against labels over every window of the engines.
inline double windows_rmse(const TddnParams& p, const std::vector<PreparedEngine>& engines) {
    std::vector<double> d;
    for (const auto& e : engines) {
        const auto y = predict_windows(p, e, 0, e.length());
        for (std::size_t j = 0; j < y.size(); ++j) d.push_back(y[j] - e.labels[j]);
    }
    return rmse(d);
}

struct TrainOutcome {
    TddnParams params; // best validation epoch
    TrainReport report;
    Scaler scaler;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Full protocol: scaler fitted on every training-file engine, engine-level
/// split, shuffled minibatches (last partial batch kept), Adam with the step
/// schedule, early stopping with restore of the best epoch.
inline TrainOutcome train(const DatasetBundle& bundle, const TddnConfig& model_cfg, const TrainConfig& cfg,
                          const SensorSelection& sel, const EpochCallback& on_epoch = {}) {
    cfg.validate();
    model_cfg.validate();
    if (model_cfg.m != sel.m()) {
        throw ConfigError("model expects m=" + std::to_string(model_cfg.m) + " columns but selection has " +
                          std::to_string(sel.m()));
    }
    const LabelPolicy policy{cfg.r_max};
    TrainOutcome out;
    out.scaler = fit_scaler(bundle.train, sel);

    std::vector<int> ids;
    for (const auto& e : bundle.train) ids.push_back(e.unit_id);
    const EngineSplit split = split_engines(ids, cfg.val_fraction, cfg.seed);
    out.report.train_ids = split.train_ids;
    out.report.val_ids = split.val_ids;

    std::vector<PreparedEngine> train_set, val_set;
    for (const auto& e : bundle.train) {
        auto prep = prepare_engine(e, out.scaler, sel, policy, model_cfg.window);
        if (std::binary_search(split.val_ids.begin(), split.val_ids.end(), e.unit_id))
            val_set.push_back(std::move(prep));
        else
            train_set.push_back(std::move(prep));
    }

    TddnParams params = init_params(model_cfg);
    Trainer trainer(params, cfg);
    EarlyStopping stopper(cfg.patience);
    TddnParams best = params;

    std::vector<SampleRef> order = enumerate_samples(train_set);
    const std::size_t w = model_cfg.window, m = model_cfg.m;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const double lr = lr_at(epoch, cfg);
        std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                          static_cast<std::uint32_t>(epoch)};
        std::mt19937_64 rng(seq);
        std::shuffle(order.begin(), order.end(), rng);

        double loss_sum = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
            const std::size_t B = std::min(cfg.batch_size, order.size() - start);
            Tensor batch({B, w, m});
            std::vector<double> labels(B);
            for (std::size_t b = 0; b < B; ++b) {
                const auto ref = order[start + b];
                train_set[ref.engine].copy_window(ref.cycle, batch.data() + b * w * m);
                labels[b] = train_set[ref.engine].labels[ref.cycle];
            }
            double loss = 0.0;
            try {
                loss = trainer.step(batch, labels, lr);
            } catch (const NumericError&) {
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_index + 1));
            }
            loss_sum += loss * static_cast<double>(B);
        }
        EpochLog log{epoch, lr, loss_sum / static_cast<double>(order.size()), windows_rmse(params, val_set),
                     batch_index, order.size()};
        out.report.epochs.push_back(log);
        if (stopper.update(epoch, log.val_rmse)) best = params;
        if (on_epoch) on_epoch(log);
        if (stopper.should_stop()) {
            out.report.stop_reason = StopReason::Patience;
            break;
        }
        if (epoch == cfg.max_epochs) out.report.stop_reason = StopReason::MaxEpochs;
    }
    out.report.best_epoch = stopper.best_epoch();
    out.report.best_val_rmse = stopper.best();
    if (stopper.best_epoch() == 0) throw NumericError("validation RMSE was never finite");
    for (auto& p : best.list) p.zero_grad();
    out.params = std::move(best);
    return out;
}

} // namespace tddn
