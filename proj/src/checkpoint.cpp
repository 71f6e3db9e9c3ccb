#include "sf2f/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <map>
#include <set>

#include "sf2f/config.hpp"

namespace sf2f {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::uint8_t kDtypeF32 = 1;
constexpr std::uint8_t kDtypeF64 = 2;
constexpr const char* kMomentumPrefix = "momentum/";

template <typename T>
constexpr std::uint8_t dtype_code() {
    return sizeof(T) == 4 ? kDtypeF32 : kDtypeF64;
}

class Writer {
public:
    template <typename U>
    void pod(U v) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
        bytes_.insert(bytes_.end(), p, p + sizeof(U));
    }
    void raw(const void* data, std::size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        bytes_.insert(bytes_.end(), p, p + n);
    }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    bool at_end() const { return pos_ == bytes_.size(); }

    template <typename U>
    U pod(const std::string& section) {
        U v;
        need(sizeof(U), section);
        std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
        pos_ += sizeof(U);
        return v;
    }

    const std::uint8_t* take(std::size_t n, const std::string& section) {
        need(n, section);
        const std::uint8_t* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }

private:
    void need(std::size_t n, const std::string& section) const {
        if (bytes_.size() - pos_ < n) {
            throw FormatError(section, "truncated checkpoint: expected " + std::to_string(n) + " more bytes, " +
                                           std::to_string(bytes_.size() - pos_) + " available");
        }
    }

    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

template <typename T>
void write_record(Writer& w, const std::string& name, const Tensor<T>& t) {
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.raw(name.data(), name.size());
    w.pod<std::uint8_t>(dtype_code<T>());
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) w.pod<std::uint32_t>(static_cast<std::uint32_t>(e));
    w.raw(t.data(), t.size() * sizeof(T));
}

struct Record {
    std::uint8_t dtype = 0;
    Shape shape;
    const std::uint8_t* data = nullptr;
};

struct Parsed {
    KeyValues config;
    std::vector<std::pair<std::string, Record>> records;
};

Parsed parse(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    const std::uint8_t* magic = r.take(4, "magic");
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0) {
        throw FormatError("magic", "not a checkpoint (expected \"SF2F\")");
    }
    const auto version = r.pod<std::uint32_t>("version");
    if (version != kCheckpointVersion) {
        throw FormatError("version", "unsupported checkpoint version " + std::to_string(version));
    }
    const auto cfg_len = r.pod<std::uint32_t>("config length");
    const std::uint8_t* cfg = r.take(cfg_len, "config");
    Parsed out;
    try {
        out.config = parse_key_values(std::string_view(reinterpret_cast<const char*>(cfg), cfg_len));
    } catch (const Error& e) {
        throw FormatError("config", e.what());
    }
    std::size_t index = 0;
    while (!r.at_end()) {
        const std::string sec = "record " + std::to_string(index);
        const auto name_len = r.pod<std::uint32_t>(sec + " name length");
        const std::uint8_t* name = r.take(name_len, sec + " name");
        Record rec;
        rec.dtype = r.pod<std::uint8_t>(sec + " dtype");
        if (rec.dtype != kDtypeF32 && rec.dtype != kDtypeF64) {
            throw FormatError(sec + " dtype", "unknown dtype code " + std::to_string(rec.dtype));
        }
        const auto rank = r.pod<std::uint32_t>(sec + " rank");
        if (rank > 8) throw FormatError(sec + " rank", "implausible rank " + std::to_string(rank));
        for (std::uint32_t i = 0; i < rank; ++i) {
            const auto e = r.pod<std::uint32_t>(sec + " extents");
            if (e == 0) throw FormatError(sec + " extents", "zero extent");
            rec.shape.push_back(e);
        }
        const std::size_t elem = rec.dtype == kDtypeF32 ? 4 : 8;
        rec.data = r.take(shape_numel(rec.shape) * elem, sec + " data");
        out.records.emplace_back(std::string(reinterpret_cast<const char*>(name), name_len), std::move(rec));
        ++index;
    }
    return out;
}

std::string join(const std::vector<std::string>& names) {
    std::string s;
    for (const auto& n : names) s += (s.empty() ? "" : ", ") + n;
    return s;
}

}  // namespace

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const Sf2Former<T>& model, const TrainingState* state) {
    KeyValues cfg = model.config().to_key_values();
    cfg["format.dtype"] = sizeof(T) == 4 ? "f32" : "f64";
    if (state) {
        cfg["state.epoch"] = std::to_string(state->epoch);
        cfg["state.momentum"] = "1";
    }
    const std::string text = format_key_values(cfg);
    Writer w;
    w.raw(kCheckpointMagic, 4);
    w.pod<std::uint32_t>(kCheckpointVersion);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
    w.raw(text.data(), text.size());
    const auto& params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) write_record(w, params[i].name, params[i].value());
    if (state) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            write_record(w, kMomentumPrefix + params[i].name, params[i].momentum);
        }
    }
    return w.take();
}

template <typename T>
void save_checkpoint(const Sf2Former<T>& model, const std::string& path, const TrainingState* state) {
    write_file_bytes(path, encode_checkpoint(model, state));
}

ModelConfig checkpoint_config(const std::vector<std::uint8_t>& bytes) {
    return ModelConfig::from_key_values(parse(bytes).config);
}

template <typename T>
std::optional<TrainingState> decode_checkpoint_into(Sf2Former<T>& model, const std::vector<std::uint8_t>& bytes) {
    Parsed parsed = parse(bytes);
    ModelConfig stored;
    try {
        stored = ModelConfig::from_key_values(parsed.config);
    } catch (const Error& e) {
        throw FormatError("config", e.what());
    }
    if (stored.to_key_values() != model.config().to_key_values()) {
        throw FormatError("config", "checkpoint architecture does not match the model:\n" +
                                        format_key_values(stored.to_key_values()));
    }
    const bool has_state = kv_bool(parsed.config, "state.momentum", false);

    auto& params = model.parameters();
    std::map<std::string, const Record*> by_name;
    std::vector<std::string> duplicates;
    for (const auto& [name, rec] : parsed.records) {
        if (!by_name.emplace(name, &rec).second) duplicates.push_back(name);
    }
    if (!duplicates.empty()) throw FormatError("records", "duplicate parameter names: " + join(duplicates));

    std::set<std::string> expected;
    for (std::size_t i = 0; i < params.size(); ++i) {
        expected.insert(params[i].name);
        if (has_state) expected.insert(kMomentumPrefix + params[i].name);
    }
    std::vector<std::string> missing, extra;
    for (const auto& n : expected) {
        if (!by_name.count(n)) missing.push_back(n);
    }
    for (const auto& [n, rec] : by_name) {
        if (!expected.count(n)) extra.push_back(n);
    }
    if (!missing.empty() || !extra.empty()) {
        std::string msg;
        if (!missing.empty()) msg += "missing parameters: " + join(missing);
        if (!extra.empty()) msg += std::string(msg.empty() ? "" : "; ") + "unexpected parameters: " + join(extra);
        throw FormatError("records", msg);
    }

    auto copy_into = [&](const std::string& name, Tensor<T>& dst) {
        const Record& rec = *by_name.at(name);
        if (rec.dtype != dtype_code<T>()) {
            throw FormatError("records", "parameter '" + name + "' has dtype code " + std::to_string(rec.dtype) +
                                             ", model expects " + std::to_string(dtype_code<T>()));
        }
        if (rec.shape != dst.shape()) {
            throw FormatError("records", "parameter '" + name + "' has shape " + shape_str(rec.shape) +
                                             ", model expects " + shape_str(dst.shape()));
        }
        std::memcpy(dst.data(), rec.data, dst.size() * sizeof(T));
    };
    for (std::size_t i = 0; i < params.size(); ++i) {
        copy_into(params[i].name, params[i].mutable_value());
        if (has_state) copy_into(kMomentumPrefix + params[i].name, params[i].momentum);
    }
    if (!has_state) return std::nullopt;
    TrainingState st;
    st.epoch = static_cast<int>(kv_int(parsed.config, "state.epoch", 0));
    return st;
}

template <typename T>
std::optional<TrainingState> load_checkpoint_into(Sf2Former<T>& model, const std::string& path) {
    return decode_checkpoint_into(model, read_file_bytes(path));
}

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    ModelConfig cfg;
    try {
        cfg = checkpoint_config(bytes);
    } catch (const FormatError&) {
        throw;
    } catch (const Error& e) {
        throw FormatError("config", e.what());
    }
    Sf2Former<T> model(cfg, 0);
    auto state = decode_checkpoint_into(model, bytes);
    return LoadedCheckpoint<T>{std::move(model), state};
}

#define SF2F_INSTANTIATE(T)                                                                                 \
    template std::vector<std::uint8_t> encode_checkpoint<T>(const Sf2Former<T>&, const TrainingState*);     \
    template void save_checkpoint<T>(const Sf2Former<T>&, const std::string&, const TrainingState*);        \
    template std::optional<TrainingState> decode_checkpoint_into<T>(Sf2Former<T>&,                          \
                                                                    const std::vector<std::uint8_t>&);      \
    template std::optional<TrainingState> load_checkpoint_into<T>(Sf2Former<T>&, const std::string&);       \
    template LoadedCheckpoint<T> load_checkpoint<T>(const std::string&);

SF2F_INSTANTIATE(float)
SF2F_INSTANTIATE(double)

#undef SF2F_INSTANTIATE

}  // namespace sf2f
