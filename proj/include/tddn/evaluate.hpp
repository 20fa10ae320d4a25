#pragma once

// Last-cycle test protocol and the checkpoint layout shared by the CLI:
// model parameters + scaler extrema + the column selection that produced them.

#include "tddn/checkpoint.hpp"
#include "tddn/metrics.hpp"
#include "tddn/model.hpp"

#include <algorithm>
#include <sstream>

namespace tddn {

/// One record per test engine, predicted from the window ending at its last
/// cycle and clamped to [0, R_max]. True RUL is capped at R_max unless
/// cap_true_rul is false.
inline MetricsReport evaluate_test(const TddnParams& p, const DatasetBundle& bundle, const Scaler& scaler,
                                   const SensorSelection& sel, const LabelPolicy& policy, bool cap_true_rul = true) {
    if (bundle.test.size() != bundle.test_rul.size()) {
        throw StructuralError("evaluate_test: " + std::to_string(bundle.test.size()) + " test engines but " +
                              std::to_string(bundle.test_rul.size()) + " RUL targets");
    }
    if (bundle.test.empty()) throw StructuralError("evaluate_test: no test engines");
    std::vector<PredictionRecord> recs;
    recs.reserve(bundle.test.size());
    for (std::size_t i = 0; i < bundle.test.size(); ++i) {
        const auto& e = bundle.test[i];
        const PreparedEngine prep = prepare_engine(e, scaler, sel, policy, p.config.window, bundle.test_rul[i]);
        const double raw = predict_windows(p, prep, prep.length() - 1, prep.length())[0];
        const double truth = static_cast<double>(bundle.test_rul[i]);
        recs.push_back({e.unit_id, cap_true_rul ? std::min(policy.r_max, truth) : truth, clamp_rul(raw, policy)});
    }
    return summarize(std::move(recs));
}

struct TrainedModel {
    TddnParams params;
    Scaler scaler;
    SensorSelection selection;
    LabelPolicy policy;
};

inline bool selection_has_sensor_14(const SensorSelection& sel) {
    return std::find(sel.columns.begin(), sel.columns.end(), ColumnId{ColumnId::Kind::Sensor, 14}) !=
           sel.columns.end();
}

inline Checkpoint make_checkpoint(const TrainedModel& tm) {
    Checkpoint ck;
    store_model(ck, tm.params);
    ck.meta["data.subset"] = to_string(tm.selection.subset);
    ck.meta["data.include_sensor_14"] = selection_has_sensor_14(tm.selection) ? "1" : "0";
    std::ostringstream rm;
    rm.precision(17);
    rm << tm.policy.r_max;
    ck.meta["data.rmax"] = rm.str();
    std::string cols;
    for (const auto& c : tm.selection.columns) cols += (cols.empty() ? "" : ",") + c.name();
    ck.meta["data.columns"] = cols;
    ck.arrays.push_back({"scaler.min", Tensor({tm.scaler.size()}, tm.scaler.min)});
    ck.arrays.push_back({"scaler.max", Tensor({tm.scaler.size()}, tm.scaler.max)});
    return ck;
}

inline TrainedModel from_checkpoint(const Checkpoint& ck) {
    TrainedModel tm;
    tm.params = load_model(ck);
    const Subset subset = parse_subset(ck.require_meta("data.subset"));
    tm.selection = select_columns(subset, ck.require_meta("data.include_sensor_14") == "1");
    try {
        tm.policy.r_max = std::stod(ck.require_meta("data.rmax"));
    } catch (const std::logic_error&) {
        throw IntegrityError("checkpoint R_max is malformed");
    }
    std::string cols;
    for (const auto& c : tm.selection.columns) cols += (cols.empty() ? "" : ",") + c.name();
    if (ck.require_meta("data.columns") != cols) throw IntegrityError("checkpoint column list does not match its subset");
    const Tensor* mn = ck.find("scaler.min");
    const Tensor* mx = ck.find("scaler.max");
    if (!mn || !mx) throw IntegrityError("checkpoint missing scaler");
    if (mn->size() != tm.selection.m() || mx->size() != tm.selection.m() || tm.params.config.m != tm.selection.m()) {
        throw IntegrityError("checkpoint scaler/selection/model column counts disagree");
    }
    tm.scaler.min.assign(mn->data(), mn->data() + mn->size());
    tm.scaler.max.assign(mx->data(), mx->data() + mx->size());
    return tm;
}

} // namespace tddn
