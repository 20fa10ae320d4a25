#pragma once

// Column selection, min-max scaling to [-1, 1], capped RUL labels,
// first-cycle padding and moving-window segmentation.

#include "tddn/cmapss.hpp"
#include "tddn/tensor.hpp"

#include <algorithm>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace tddn {

struct ColumnId {
    enum class Kind { Setting, Sensor };
    Kind kind = Kind::Sensor;
    int index = 1; // 1-based, as in the NASA documentation

    std::string name() const {
        return (kind == Kind::Setting ? "setting" : "sensor") + std::to_string(index);
    }
    double read(const CycleRow& row) const {
        return kind == Kind::Setting ? row.settings[index - 1] : row.sensors[index - 1];
    }
    friend bool operator==(const ColumnId&, const ColumnId&) = default;
};

struct SensorSelection {
    Subset subset = Subset::FD001;
    std::vector<ColumnId> columns;

    std::size_t m() const { return columns.size(); }
};

/// FD001/FD003 keep settings 1-2 and the thirteen trending sensors;
/// FD002/FD004 keep every setting and sensor.
inline SensorSelection select_columns(Subset subset, bool include_sensor_14 = false) {
    SensorSelection sel;
    sel.subset = subset;
    using K = ColumnId::Kind;
    if (subset == Subset::FD001 || subset == Subset::FD003) {
        sel.columns.push_back({K::Setting, 1});
        sel.columns.push_back({K::Setting, 2});
        std::vector<int> sensors = {2, 3, 4, 7, 8, 9, 11, 12, 13, 15, 17, 20, 21};
        if (include_sensor_14) {
            sensors.push_back(14);
            std::sort(sensors.begin(), sensors.end());
        }
        for (int s : sensors) sel.columns.push_back({K::Sensor, s});
    } else if (subset == Subset::FD002 || subset == Subset::FD004) {
        for (int k = 1; k <= static_cast<int>(kNumSettings); ++k) sel.columns.push_back({K::Setting, k});
        for (int k = 1; k <= static_cast<int>(kNumSensors); ++k) sel.columns.push_back({K::Sensor, k});
    } else {
        throw ConfigError("unknown subset");
    }
    return sel;
}

struct Scaler {
    std::vector<double> min;
    std::vector<double> max;

    std::size_t size() const { return min.size(); }
    bool degenerate(std::size_t k) const { return max[k] == min[k]; }

    std::vector<std::size_t> degenerate_columns() const {
        std::vector<std::size_t> out;
        for (std::size_t k = 0; k < size(); ++k)
            if (degenerate(k)) out.push_back(k);
        return out;
    }

    /// 2(x - min)/(max - min) - 1; degenerate columns map to 0.
    double scale(std::size_t k, double x) const {
        if (degenerate(k)) return 0.0;
        return 2.0 * (x - min[k]) / (max[k] - min[k]) - 1.0;
    }
};

/// Per-column extrema over every row of every training engine.
inline Scaler fit_scaler(const std::vector<EngineTrajectory>& train, const SensorSelection& sel) {
    if (train.empty()) throw Error("fit_scaler: no training trajectories");
    Scaler s;
    s.min.assign(sel.m(), std::numeric_limits<double>::infinity());
    s.max.assign(sel.m(), -std::numeric_limits<double>::infinity());
    std::size_t rows = 0;
    for (const auto& e : train) {
        for (const auto& row : e.rows) {
            ++rows;
            for (std::size_t k = 0; k < sel.m(); ++k) {
                const double v = sel.columns[k].read(row);
                s.min[k] = std::min(s.min[k], v);
                s.max[k] = std::max(s.max[k], v);
            }
        }
    }
    if (rows == 0) throw Error("fit_scaler: training trajectories contain no rows");
    return s;
}

/// n x m normalized matrix. Values outside the training range are not clipped.
inline Tensor apply_scaler(const EngineTrajectory& e, const Scaler& s, const SensorSelection& sel) {
    if (s.size() != sel.m()) {
        throw ShapeError("apply_scaler: scaler has " + std::to_string(s.size()) +
                         " columns, selection has " + std::to_string(sel.m()));
    }
    if (e.rows.empty()) throw ShapeError("apply_scaler: empty trajectory");
    Tensor out({e.length(), sel.m()});
    for (std::size_t i = 0; i < e.length(); ++i)
        for (std::size_t k = 0; k < sel.m(); ++k)
            out.at(i, k) = s.scale(k, sel.columns[k].read(e.rows[i]));
    return out;
}

struct LabelPolicy {
    double r_max = 120.0;
};

/// label(j) = min(R_max, terminal_rul + n - j), j = 1..n.
inline std::vector<double> assign_rul_labels(std::size_t n, const LabelPolicy& policy, int terminal_rul = 0) {
    if (n < 1) throw Error("assign_rul_labels: empty trajectory");
    if (terminal_rul < 0) throw Error("assign_rul_labels: negative terminal RUL");
    if (!(policy.r_max > 0.0)) throw ConfigError("R_max must be positive");
    std::vector<double> labels(n);
    for (std::size_t j = 1; j <= n; ++j) {
        labels[j - 1] = std::min(policy.r_max, static_cast<double>(terminal_rul) +
                                                   static_cast<double>(n - j));
    }
    return labels;
}

/// Prepends w-1 copies of the first row: (n + w - 1) x m.
inline Tensor pad_series(const Tensor& x, std::size_t w) {
    if (w < 1) throw Error("pad_series: window size must be >= 1");
    if (x.rank() != 2 || x.dim(0) < 1) throw ShapeError("pad_series: expected non-empty n x m matrix");
    const std::size_t n = x.dim(0), m = x.dim(1);
    Tensor out({n + w - 1, m});
    for (std::size_t i = 0; i < w - 1; ++i)
        std::copy_n(x.data(), m, out.data() + i * m);
    std::copy_n(x.data(), n * m, out.data() + (w - 1) * m);
    return out;
}

struct WindowedSample {
    Tensor window; // w x m
    double label = 0.0;
    int engine_id = 0;
    std::size_t cycle = 0; // 1-based; the window's last row is this cycle
};

/// Window j covers padded rows j..j+w-1 (1-based), exactly n windows.
inline std::vector<WindowedSample> make_windows(const Tensor& padded, std::size_t w,
                                                const std::vector<double>& labels, int engine_id = 0) {
    if (w < 1) throw Error("make_windows: window size must be >= 1");
    if (padded.rank() != 2 || labels.empty() || padded.dim(0) != labels.size() + w - 1) {
        throw ShapeError("make_windows: padded length must equal n + w - 1");
    }
    const std::size_t m = padded.dim(1);
    std::vector<WindowedSample> out;
    out.reserve(labels.size());
    for (std::size_t j = 0; j < labels.size(); ++j) {
        std::vector<double> vals(padded.data() + j * m, padded.data() + (j + w) * m);
        out.push_back({Tensor({w, m}, std::move(vals)), labels[j], engine_id, j + 1});
    }
    return out;
}

/// Normalized, padded engine plus its labels. Windows are sliced on demand
/// so large subsets never materialize all w x m samples at once.
struct PreparedEngine {
    int unit_id = 0;
    std::size_t window = 0;
    Tensor padded; // (n + w - 1) x m
    std::vector<double> labels;

    std::size_t length() const { return labels.size(); }
    std::size_t m() const { return padded.dim(1); }

    /// Copies window j (0-based) into dst, which holds w*m values.
    void copy_window(std::size_t j, double* dst) const {
        const std::size_t cols = m();
        std::copy_n(padded.data() + j * cols, window * cols, dst);
    }

    WindowedSample sample(std::size_t j) const {
        Tensor t({window, m()});
        copy_window(j, t.data());
        return {std::move(t), labels[j], unit_id, j + 1};
    }
};

inline PreparedEngine prepare_engine(const EngineTrajectory& e, const Scaler& s, const SensorSelection& sel,
                                     const LabelPolicy& policy, std::size_t w, int terminal_rul = 0) {
    PreparedEngine p;
    p.unit_id = e.unit_id;
    p.window = w;
    p.padded = pad_series(apply_scaler(e, s, sel), w);
    p.labels = assign_rul_labels(e.length(), policy, terminal_rul);
    return p;
}

/// Debug dump: header row, then one block of w rows per window.
inline void write_windows_csv(std::ostream& out, const std::vector<WindowedSample>& samples,
                              const SensorSelection& sel) {
    out << "engine,cycle,row,label";
    for (const auto& c : sel.columns) out << ',' << c.name();
    out << '\n';
    out.precision(17);
    for (const auto& s : samples) {
        for (std::size_t r = 0; r < s.window.dim(0); ++r) {
            out << s.engine_id << ',' << s.cycle << ',' << r + 1 << ',' << s.label;
            for (std::size_t k = 0; k < s.window.dim(1); ++k) out << ',' << s.window.at(r, k);
            out << '\n';
        }
    }
}

} // namespace tddn
