#pragma once

#include "tddn/error.hpp"

#include <cmath>
#include <ostream>
#include <span>
#include <vector>

namespace tddn {

inline double rmse(std::span<const double> d) {
    if (d.empty()) throw Error("rmse: no errors");
    double acc = 0.0;
    for (double v : d) acc += v * v;
    return std::sqrt(acc / static_cast<double>(d.size()));
}

/// Asymmetric PHM score: late predictions (d >= 0) cost exp(d/10) - 1,
/// early ones exp(-d/13) - 1.
inline double nasa_score_term(double d) {
    return d < 0.0 ? std::exp(-d / 13.0) - 1.0 : std::exp(d / 10.0) - 1.0;
}

inline double nasa_score(std::span<const double> d) {
    if (d.empty()) throw Error("nasa_score: no errors");
    double acc = 0.0;
    for (double v : d) acc += nasa_score_term(v);
    return acc;
}

struct PredictionRecord {
    int engine_id = 0;
    double true_rul = 0.0;
    double pred_rul = 0.0;
    double d() const { return pred_rul - true_rul; }
};

struct MetricsReport {
    double rmse = 0.0;
    double score = 0.0;
    std::vector<PredictionRecord> records;

    std::size_t count() const { return records.size(); }
};

inline MetricsReport summarize(std::vector<PredictionRecord> records) {
    std::vector<double> d;
    d.reserve(records.size());
    for (const auto& r : records) d.push_back(r.d());
    MetricsReport rep;
    rep.rmse = rmse(d);
    rep.score = nasa_score(d);
    rep.records = std::move(records);
    return rep;
}

/// engine_id,true_rul,pred_rul,d rows.
inline void write_metrics_csv(std::ostream& out, const MetricsReport& rep) {
    out.precision(17);
    out << "engine_id,true_rul,pred_rul,d\n";
    for (const auto& r : rep.records)
        out << r.engine_id << ',' << r.true_rul << ',' << r.pred_rul << ',' << r.d() << '\n';
}

inline void write_summary_csv(std::ostream& out, const MetricsReport& rep) {
    out.precision(17);
    out << "rmse,score,count\n" << rep.rmse << ',' << rep.score << ',' << rep.count() << '\n';
}

} // namespace tddn
