#pragma once

// Synthetic run-to-failure fleets in the C-MAPSS layout. Not a physical
// simulator: each engine gets a random life, a hidden wear curve that stays
// flat and then grows quadratically, and sensors that are noisy affine
// functions of that wear. Sensors the FD001 selection drops are kept
// constant up to small noise. FD002/FD004 draw one of six operating
// conditions per cycle, which shifts every baseline.
//
// Used by the tests and the demo when the NASA files are not at hand.

#include "tddn/cmapss.hpp"

#include <array>
#include <filesystem>
#include <fstream>
#include <random>

namespace tddn {

struct SyntheticSpec {
    Subset subset = Subset::FD001;
    std::size_t train_engines = 20;
    std::size_t test_engines = 10;
    std::size_t min_life = 128;
    std::size_t max_life = 300;
    std::size_t min_test_length = 31;
    double noise = 1.0; // multiplies every sensor's noise level
    std::uint64_t seed = 1;
};

namespace detail {

inline bool is_flat_sensor(int sensor) {
    switch (sensor) {
    case 1: case 5: case 6: case 10: case 14: case 16: case 18: case 19: return true;
    default: return false;
    }
}

inline constexpr std::array<std::array<double, 3>, 6> kConditions = {{
    {0.0, 0.0, 100.0},
    {10.0, 0.25, 100.0},
    {20.0, 0.70, 100.0},
    {25.0, 0.62, 60.0},
    {35.0, 0.84, 100.0},
    {42.0, 0.84, 100.0},
}};

struct SensorModel {
    double base;
    double cond_shift; // per operating-condition index
    double wear_gain;  // signed
    double noise;
};

inline std::array<SensorModel, kNumSensors> sensor_models(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> base(100.0, 600.0), gain(4.0, 12.0), nz(0.3, 1.0), shift(5.0, 40.0);
    std::array<SensorModel, kNumSensors> out{};
    for (int s = 1; s <= static_cast<int>(kNumSensors); ++s) {
        SensorModel sm{base(rng), shift(rng), gain(rng), nz(rng)};
        if (is_flat_sensor(s)) {
            sm.wear_gain = 0.0;
            sm.noise *= 0.01;
        } else if (s == 7 || s == 12 || s == 20 || s == 21) {
            sm.wear_gain = -sm.wear_gain;
        }
        out[s - 1] = sm;
    }
    return out;
}

inline EngineTrajectory synth_engine(int unit, std::size_t life, std::size_t length, bool multi_condition,
                                     const std::array<SensorModel, kNumSensors>& models, double noise_scale,
                                     std::mt19937_64& rng) {
    std::uniform_real_distribution<double> onset_frac(0.35, 0.65);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<int> cond_pick(0, 5);
    const double onset = onset_frac(rng) * static_cast<double>(life);
    const double span = static_cast<double>(life) - onset;
    std::array<double, kNumSensors> engine_offset{};
    for (auto& o : engine_offset) o = 0.3 * gauss(rng);

    EngineTrajectory e;
    e.unit_id = unit;
    for (std::size_t c = 1; c <= length; ++c) {
        const double t = static_cast<double>(c);
        const double x = t > onset ? (t - onset) / span : 0.0;
        const double wear = x * x;
        const int cond = multi_condition ? cond_pick(rng) : 0;
        CycleRow row;
        for (std::size_t k = 0; k < kNumSettings; ++k) {
            const double jitter = k == 2 ? 0.0 : (k == 0 ? 0.002 : 0.0003) * gauss(rng);
            row.settings[k] = kConditions[cond][k] + jitter;
        }
        for (std::size_t s = 0; s < kNumSensors; ++s) {
            const auto& sm = models[s];
            row.sensors[s] = sm.base + sm.cond_shift * cond + sm.wear_gain * wear + engine_offset[s] * sm.noise +
                             noise_scale * sm.noise * gauss(rng);
        }
        e.rows.push_back(row);
    }
    return e;
}

} // namespace detail

inline DatasetBundle make_synthetic_bundle(const SyntheticSpec& spec) {
    if (spec.min_life < 2 || spec.max_life < spec.min_life) throw ConfigError("synthetic: bad life range");
    if (spec.min_test_length < 1 || spec.min_test_length >= spec.min_life) {
        throw ConfigError("synthetic: min_test_length must lie in [1, min_life)");
    }
    std::mt19937_64 rng(spec.seed);
    const bool multi = spec.subset == Subset::FD002 || spec.subset == Subset::FD004;
    const auto models = detail::sensor_models(rng);
    std::uniform_int_distribution<std::size_t> life_dist(spec.min_life, spec.max_life);

    DatasetBundle b;
    b.subset = spec.subset;
    for (std::size_t u = 1; u <= spec.train_engines; ++u) {
        const std::size_t life = u == 1 ? spec.min_life : life_dist(rng);
        b.train.push_back(detail::synth_engine(static_cast<int>(u), life, life, multi, models, spec.noise, rng));
    }
    for (std::size_t u = 1; u <= spec.test_engines; ++u) {
        const std::size_t life = life_dist(rng);
        std::uniform_int_distribution<std::size_t> cut(spec.min_test_length, life - 1);
        const std::size_t length = u == 1 ? spec.min_test_length : cut(rng);
        b.test.push_back(detail::synth_engine(static_cast<int>(u), life, length, multi, models, spec.noise, rng));
        b.test_rul.push_back(static_cast<int>(life - length));
    }
    return b;
}

/// Writes train_FDxxx.txt, test_FDxxx.txt and RUL_FDxxx.txt into dir.
inline void write_bundle(const std::filesystem::path& dir, const DatasetBundle& b) {
    std::filesystem::create_directories(dir);
    const auto files = resolve_subset_files(dir, b.subset);
    auto open = [](const std::filesystem::path& p) {
        std::ofstream out(p);
        if (!out) throw IoError("cannot write '" + p.string() + "'");
        return out;
    };
    {
        auto out = open(files.train);
        write_data_file(out, b.train);
    }
    {
        auto out = open(files.test);
        write_data_file(out, b.test);
    }
    {
        auto out = open(files.rul);
        write_rul_file(out, b.test_rul);
    }
}

} // namespace tddn
