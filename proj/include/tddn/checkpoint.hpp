#pragma once

// Binary checkpoint container, little-endian throughout:
//
//   "TDDNCKPT"  u32 version
//   u32 n_meta   { u32 len, key bytes, u32 len, value bytes } * n_meta
//   u32 n_arrays { u32 len, name bytes, u32 rank, u64 dims[rank], f64 values[] } * n_arrays
//   u32 crc32 of every byte after the version field
//
// Metadata carries the model config plus whatever the caller adds (subset,
// selection flags). Arrays are the named parameters and scaler extrema.

#include "tddn/model.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace tddn {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'T', 'D', 'D', 'N', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

struct NamedArray {
    std::string name;
    Tensor value;
};

struct Checkpoint {
    std::map<std::string, std::string> meta;
    std::vector<NamedArray> arrays;

    const Tensor* find(const std::string& name) const {
        for (const auto& a : arrays)
            if (a.name == name) return &a.value;
        return nullptr;
    }
    const std::string& require_meta(const std::string& key) const {
        auto it = meta.find(key);
        if (it == meta.end()) throw IntegrityError("checkpoint missing metadata '" + key + "'");
        return it->second;
    }
};

namespace detail {

class ByteWriter {
public:
    template <typename T>
    void put(T v) {
        const auto* p = reinterpret_cast<const char*>(&v);
        buf_.append(p, sizeof(T));
    }
    void put_str(const std::string& s) {
        put(static_cast<std::uint32_t>(s.size()));
        buf_.append(s);
    }
    void put_raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
    const std::string& bytes() const { return buf_; }

private:
    std::string buf_;
};

class ByteReader {
public:
    ByteReader(const char* p, std::size_t n) : p_(p), n_(n) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, p_ + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string get_str() {
        const auto len = get<std::uint32_t>();
        need(len);
        std::string s(p_ + pos_, len);
        pos_ += len;
        return s;
    }
    void get_raw(void* dst, std::size_t n) {
        need(n);
        std::memcpy(dst, p_ + pos_, n);
        pos_ += n;
    }
    bool done() const { return pos_ == n_; }

private:
    void need(std::size_t k) const {
        if (n_ - pos_ < k) throw IntegrityError("checkpoint truncated");
    }
    const char* p_;
    std::size_t n_;
    std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(const std::string& s) {
    return static_cast<std::uint32_t>(
        ::crc32(0L, reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(s.size())));
}

} // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
    detail::ByteWriter body;
    body.put(static_cast<std::uint32_t>(ck.meta.size()));
    for (const auto& [k, v] : ck.meta) {
        body.put_str(k);
        body.put_str(v);
    }
    body.put(static_cast<std::uint32_t>(ck.arrays.size()));
    for (const auto& a : ck.arrays) {
        body.put_str(a.name);
        body.put(static_cast<std::uint32_t>(a.value.rank()));
        for (auto d : a.value.shape()) body.put(static_cast<std::uint64_t>(d));
        body.put_raw(a.value.data(), a.value.size() * sizeof(double));
    }
    detail::ByteWriter out;
    out.put_raw(kCheckpointMagic, sizeof(kCheckpointMagic));
    out.put(kCheckpointVersion);
    out.put_raw(body.bytes().data(), body.bytes().size());
    out.put(detail::crc32_of(body.bytes()));
    return out.bytes();
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
    constexpr std::size_t header = sizeof(kCheckpointMagic) + sizeof(std::uint32_t);
    if (bytes.size() < header + sizeof(std::uint32_t) ||
        std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
        throw IntegrityError("not a TDDN checkpoint (bad magic)");
    }
    std::uint32_t version = 0;
    std::memcpy(&version, bytes.data() + sizeof(kCheckpointMagic), sizeof(version));
    if (version != kCheckpointVersion) {
        throw IntegrityError("unsupported checkpoint version " + std::to_string(version));
    }
    const std::string body = bytes.substr(header, bytes.size() - header - sizeof(std::uint32_t));
    std::uint32_t stored = 0;
    std::memcpy(&stored, bytes.data() + bytes.size() - sizeof(stored), sizeof(stored));
    if (stored != detail::crc32_of(body)) throw IntegrityError("checkpoint checksum mismatch");

    detail::ByteReader r(body.data(), body.size());
    Checkpoint ck;
    const auto n_meta = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n_meta; ++i) {
        auto k = r.get_str();
        ck.meta[k] = r.get_str();
    }
    const auto n_arrays = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n_arrays; ++i) {
        NamedArray a;
        a.name = r.get_str();
        const auto rank = r.get<std::uint32_t>();
        if (rank < 1 || rank > 3) throw IntegrityError("array '" + a.name + "' has invalid rank");
        Shape shape(rank);
        for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
        std::vector<double> vals(shape_count(shape));
        r.get_raw(vals.data(), vals.size() * sizeof(double));
        a.value = Tensor(std::move(shape), std::move(vals));
        ck.arrays.push_back(std::move(a));
    }
    if (!r.done()) throw IntegrityError("trailing bytes in checkpoint");
    return ck;
}

inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    const auto bytes = serialize_checkpoint(ck);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to '" + path.string() + "'");
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize_checkpoint(ss.str());
}

// --- model <-> checkpoint ---------------------------------------------------

inline std::string join_sizes(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(v[i]);
    }
    return s;
}

inline std::vector<std::size_t> parse_sizes(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        try {
            out.push_back(static_cast<std::size_t>(std::stoull(tok)));
        } catch (const std::exception&) {
            throw ParseError("bad integer list '" + s + "'");
        }
    }
    return out;
}

inline void store_model(Checkpoint& ck, const TddnParams& p) {
    const auto& c = p.config;
    ck.meta["model.window"] = std::to_string(c.window);
    ck.meta["model.m"] = std::to_string(c.m);
    ck.meta["model.conv_channels"] = join_sizes(c.conv_channels);
    ck.meta["model.attention_size"] = std::to_string(c.d_a());
    ck.meta["model.regressor_hidden"] = std::to_string(c.regressor_hidden);
    ck.meta["model.seed"] = std::to_string(c.seed);
    for (const auto& prm : p.list) ck.arrays.push_back({prm.name, prm.value});
}

inline TddnParams load_model(const Checkpoint& ck) {
    TddnConfig c;
    try {
        c.window = std::stoull(ck.require_meta("model.window"));
        c.m = std::stoull(ck.require_meta("model.m"));
        c.conv_channels = parse_sizes(ck.require_meta("model.conv_channels"));
        c.attention_size = std::stoull(ck.require_meta("model.attention_size"));
        c.regressor_hidden = std::stoull(ck.require_meta("model.regressor_hidden"));
        c.seed = std::stoull(ck.require_meta("model.seed"));
        c.validate();
    } catch (const IntegrityError&) {
        throw;
    } catch (const std::exception& e) {
        throw IntegrityError(std::string("checkpoint model metadata is malformed: ") + e.what());
    }
    TddnParams p;
    p.config = c;
    for (auto& [name, shape] : param_shapes(c)) {
        const Tensor* t = ck.find(name);
        if (!t) throw IntegrityError("checkpoint missing parameter '" + name + "'");
        if (t->shape() != shape) {
            throw IntegrityError("parameter '" + name + "' has shape " + shape_str(t->shape()) + ", expected " +
                                 shape_str(shape));
        }
        p.list.emplace_back(name, *t);
    }
    return p;
}

} // namespace tddn
