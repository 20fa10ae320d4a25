#pragma once

// C-MAPSS text ingestion: 26 whitespace-separated columns per line
// (unit, cycle, setting1..3, sensor1..21) and one-integer-per-line RUL files.

#include "tddn/error.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace tddn {

inline constexpr std::size_t kNumSettings = 3;
inline constexpr std::size_t kNumSensors = 21;
inline constexpr std::size_t kNumColumns = 2 + kNumSettings + kNumSensors;

enum class Subset { FD001 = 1, FD002 = 2, FD003 = 3, FD004 = 4 };

inline std::string to_string(Subset s) {
    return "FD00" + std::to_string(static_cast<int>(s));
}

inline Subset parse_subset(std::string_view text) {
    if (text == "FD001") return Subset::FD001;
    if (text == "FD002") return Subset::FD002;
    if (text == "FD003") return Subset::FD003;
    if (text == "FD004") return Subset::FD004;
    throw ConfigError("unknown subset '" + std::string(text) + "' (expected FD001..FD004)");
}

struct RawRecord {
    int unit_id = 0;
    int cycle = 0;
    std::array<double, kNumSettings> settings{};
    std::array<double, kNumSensors> sensors{};
};

struct CycleRow {
    std::array<double, kNumSettings> settings{};
    std::array<double, kNumSensors> sensors{};
};

/// One engine, rows ordered by cycle; rows[k] is cycle k+1.
struct EngineTrajectory {
    int unit_id = 0;
    std::vector<CycleRow> rows;

    std::size_t length() const { return rows.size(); }
};

struct DatasetBundle {
    Subset subset = Subset::FD001;
    std::vector<EngineTrajectory> train;
    std::vector<EngineTrajectory> test;
    std::vector<int> test_rul;
};

/// Reference statistics of the NASA-distributed files.
struct OfficialCounts {
    std::size_t train_engines;
    std::size_t test_engines;
    std::size_t min_train_length;
    std::size_t min_test_length;
};

inline OfficialCounts official_counts(Subset s) {
    switch (s) {
    case Subset::FD001: return {100, 100, 128, 31};
    case Subset::FD002: return {260, 259, 128, 21};
    case Subset::FD003: return {100, 100, 145, 38};
    case Subset::FD004: return {259, 248, 128, 19};
    }
    throw ConfigError("unknown subset");
}

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

inline double parse_double(std::string_view tok, std::size_t line_no) {
    double v = 0.0;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    if (!tok.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
        throw ParseError("line " + std::to_string(line_no) + ": non-numeric token '" +
                         std::string(tok) + "'");
    }
    return v;
}

inline int parse_positive_int(std::string_view tok, std::size_t line_no, const char* what) {
    const double v = parse_double(tok, line_no);
    if (v != std::floor(v) || v < 1.0 || v > 1e9) {
        throw ParseError("line " + std::to_string(line_no) + ": " + what +
                         " must be a positive integer, got '" + std::string(tok) + "'");
    }
    return static_cast<int>(v);
}

inline void append_double(std::string& out, double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, ptr);
}

} // namespace detail

inline std::vector<RawRecord> parse_data_file(std::istream& in) {
    std::vector<RawRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto fields = detail::split_fields(line);
        if (fields.empty()) continue;
        if (fields.size() != kNumColumns) {
            throw ParseError("line " + std::to_string(line_no) + ": expected " +
                             std::to_string(kNumColumns) + " columns, found " +
                             std::to_string(fields.size()));
        }
        RawRecord r;
        r.unit_id = detail::parse_positive_int(fields[0], line_no, "unit id");
        r.cycle = detail::parse_positive_int(fields[1], line_no, "cycle");
        for (std::size_t k = 0; k < kNumSettings; ++k)
            r.settings[k] = detail::parse_double(fields[2 + k], line_no);
        for (std::size_t k = 0; k < kNumSensors; ++k)
            r.sensors[k] = detail::parse_double(fields[2 + kNumSettings + k], line_no);
        records.push_back(r);
    }
    return records;
}

inline std::vector<RawRecord> parse_data_text(const std::string& text) {
    std::istringstream in(text);
    return parse_data_file(in);
}

inline std::vector<EngineTrajectory> group_by_engine(std::vector<RawRecord> records) {
    std::stable_sort(records.begin(), records.end(), [](const RawRecord& a, const RawRecord& b) {
        return a.unit_id != b.unit_id ? a.unit_id < b.unit_id : a.cycle < b.cycle;
    });
    std::vector<EngineTrajectory> engines;
    for (const auto& r : records) {
        if (engines.empty() || engines.back().unit_id != r.unit_id) {
            engines.push_back(EngineTrajectory{r.unit_id, {}});
        }
        auto& e = engines.back();
        const int expected = static_cast<int>(e.rows.size()) + 1;
        if (r.cycle < expected) {
            throw StructuralError("unit " + std::to_string(r.unit_id) + ": duplicate cycle " +
                                  std::to_string(r.cycle));
        }
        if (r.cycle > expected) {
            throw StructuralError("unit " + std::to_string(r.unit_id) + ": gap at cycle " +
                                  std::to_string(expected));
        }
        e.rows.push_back(CycleRow{r.settings, r.sensors});
    }
    return engines;
}

inline std::vector<int> parse_rul_file(std::istream& in) {
    std::vector<int> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto fields = detail::split_fields(line);
        if (fields.empty()) continue;
        if (fields.size() != 1) {
            throw ParseError("RUL line " + std::to_string(line_no) + ": expected one value");
        }
        const auto tok = fields[0];
        long v = 0;
        auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || ptr != tok.data() + tok.size()) {
            throw ParseError("RUL line " + std::to_string(line_no) + ": not an integer '" +
                             std::string(tok) + "'");
        }
        if (v < 0) {
            throw ParseError("RUL line " + std::to_string(line_no) + ": negative RUL " +
                             std::to_string(v));
        }
        out.push_back(static_cast<int>(v));
    }
    return out;
}

inline std::vector<int> parse_rul_text(const std::string& text) {
    std::istringstream in(text);
    return parse_rul_file(in);
}

/// Writes trajectories in the NASA column layout. Shortest round-trip
/// formatting, so re-parsing reproduces every double bit-for-bit.
inline void write_data_file(std::ostream& out, const std::vector<EngineTrajectory>& engines) {
    std::string line;
    for (const auto& e : engines) {
        for (std::size_t k = 0; k < e.rows.size(); ++k) {
            line.clear();
            line += std::to_string(e.unit_id);
            line += ' ';
            line += std::to_string(k + 1);
            for (double v : e.rows[k].settings) {
                line += ' ';
                detail::append_double(line, v);
            }
            for (double v : e.rows[k].sensors) {
                line += ' ';
                detail::append_double(line, v);
            }
            line += '\n';
            out << line;
        }
    }
}

inline void write_rul_file(std::ostream& out, const std::vector<int>& rul) {
    for (int v : rul) out << v << '\n';
}

/// Optional explicit paths for renamed files; empty means the NASA name.
struct SubsetFiles {
    std::filesystem::path train;
    std::filesystem::path test;
    std::filesystem::path rul;
};

inline SubsetFiles resolve_subset_files(const std::filesystem::path& dir, Subset s,
                                        const SubsetFiles& overrides = {}) {
    const std::string id = to_string(s);
    SubsetFiles f;
    f.train = overrides.train.empty() ? dir / ("train_" + id + ".txt") : overrides.train;
    f.test = overrides.test.empty() ? dir / ("test_" + id + ".txt") : overrides.test;
    f.rul = overrides.rul.empty() ? dir / ("RUL_" + id + ".txt") : overrides.rul;
    return f;
}

inline std::ifstream open_input(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot open '" + p.string() + "'");
    return in;
}

inline DatasetBundle load_subset(const std::filesystem::path& dir, Subset s,
                                 const SubsetFiles& overrides = {}) {
    const auto files = resolve_subset_files(dir, s, overrides);
    for (const auto& p : {files.train, files.test, files.rul}) {
        if (!std::filesystem::exists(p)) throw IoError("missing file '" + p.string() + "'");
    }
    DatasetBundle b;
    b.subset = s;
    {
        auto in = open_input(files.train);
        b.train = group_by_engine(parse_data_file(in));
    }
    {
        auto in = open_input(files.test);
        b.test = group_by_engine(parse_data_file(in));
    }
    {
        auto in = open_input(files.rul);
        b.test_rul = parse_rul_file(in);
    }
    if (b.train.empty()) throw StructuralError("training file has no records");
    if (b.test_rul.size() != b.test.size()) {
        throw StructuralError("test file has " + std::to_string(b.test.size()) +
                              " engines but RUL file has " + std::to_string(b.test_rul.size()) +
                              " lines");
    }
    return b;
}

/// Empty when the bundle matches the published per-subset statistics,
/// otherwise a description of the first mismatch.
inline std::optional<std::string> check_official_counts(const DatasetBundle& b) {
    const auto ref = official_counts(b.subset);
    auto min_len = [](const std::vector<EngineTrajectory>& es) {
        std::size_t m = SIZE_MAX;
        for (const auto& e : es) m = std::min(m, e.length());
        return m;
    };
    if (b.train.size() != ref.train_engines)
        return "train engines " + std::to_string(b.train.size()) + " != " +
               std::to_string(ref.train_engines);
    if (b.test.size() != ref.test_engines)
        return "test engines " + std::to_string(b.test.size()) + " != " +
               std::to_string(ref.test_engines);
    if (min_len(b.train) != ref.min_train_length)
        return "min train length " + std::to_string(min_len(b.train)) + " != " +
               std::to_string(ref.min_train_length);
    if (min_len(b.test) != ref.min_test_length)
        return "min test length " + std::to_string(min_len(b.test)) + " != " +
               std::to_string(ref.min_test_length);
    return std::nullopt;
}

} // namespace tddn
