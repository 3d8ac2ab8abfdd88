#include <cstring>

#include "hgmn/model.hpp"

namespace hgmn {

namespace {

constexpr char kMagic[8] = {'H', 'G', 'M', 'N', 'C', 'K', 'P', '1'};

// num_epochs may differ between the checkpoint and the resuming run; every
// other field must match exactly.
std::string strip_epoch_line(const std::string& config_text) {
    std::string out;
    std::size_t pos = 0;
    while (pos < config_text.size()) {
        std::size_t end = config_text.find('\n', pos);
        if (end == std::string::npos) end = config_text.size();
        const std::string line = config_text.substr(pos, end - pos);
        if (line.rfind("num_epochs", 0) != 0) out += line + "\n";
        pos = end + 1;
    }
    return out;
}

void put_u64(std::string& out, std::uint64_t v) {
    char buf[8];
    std::memcpy(buf, &v, 8);
    out.append(buf, 8);
}

void put_i64(std::string& out, std::int64_t v) { put_u64(out, static_cast<std::uint64_t>(v)); }

void put_f64(std::string& out, double v) {
    char buf[8];
    std::memcpy(buf, &v, 8);
    out.append(buf, 8);
}

void put_bytes(std::string& out, const std::string& s) {
    put_u64(out, s.size());
    out.append(s);
}

void put_array(std::string& out, const Array& a) {
    put_u64(out, static_cast<std::uint64_t>(a.size()));
    out.append(reinterpret_cast<const char*>(a.data()),
               static_cast<std::size_t>(a.size()) * sizeof(double));
}

struct Reader {
    const std::string& bytes;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > bytes.size()) throw IoError("checkpoint truncated");
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v;
        std::memcpy(&v, bytes.data() + pos, 8);
        pos += 8;
        return v;
    }
    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
    double f64() {
        need(8);
        double v;
        std::memcpy(&v, bytes.data() + pos, 8);
        pos += 8;
        return v;
    }
    std::string str() {
        const std::uint64_t n = u64();
        need(n);
        std::string s = bytes.substr(pos, n);
        pos += n;
        return s;
    }
    Array array() {
        const std::uint64_t n = u64();
        need(n * sizeof(double));
        Array a(static_cast<Index>(n));
        std::memcpy(a.data(), bytes.data() + pos, n * sizeof(double));
        pos += n * sizeof(double);
        return a;
    }
};

}  // namespace

std::string serialize_checkpoint(const HgmnModel& model, const TrainState& state) {
    std::string out;
    out.append(kMagic, 8);
    put_bytes(out, model.config.canonical_text());

    const auto named = model.named_parameters();
    put_u64(out, named.size());
    for (const auto& [name, p] : named) {
        put_bytes(out, name);
        put_u64(out, static_cast<std::uint64_t>(p.ndim()));
        for (Index d : p.shape()) put_u64(out, static_cast<std::uint64_t>(d));
        put_array(out, p.value_flat());
    }

    put_f64(out, state.adam.learning_rate);
    put_f64(out, state.adam.weight_decay);
    put_f64(out, state.adam.beta1);
    put_f64(out, state.adam.beta2);
    put_f64(out, state.adam.epsilon);
    put_u64(out, state.adam.step);
    put_u64(out, state.adam.m.size());
    for (const Array& a : state.adam.m) put_array(out, a);
    for (const Array& a : state.adam.v) put_array(out, a);

    put_bytes(out, state.rng.serialize());
    put_i64(out, state.epoch);
    put_i64(out, state.best_epoch);
    put_f64(out, state.best_val_macro);
    return out;
}

ModelConfig checkpoint_config(const std::string& bytes) {
    Reader r{bytes};
    r.need(8);
    if (std::memcmp(bytes.data(), kMagic, 8) != 0)
        throw IoError("not a checkpoint file (bad magic)");
    r.pos = 8;
    return parse_config_text(r.str());
}

void load_checkpoint(const std::string& bytes, HgmnModel& model, TrainState& state) {
    Reader r{bytes};
    r.need(8);
    if (std::memcmp(bytes.data(), kMagic, 8) != 0)
        throw IoError("not a checkpoint file (bad magic)");
    r.pos = 8;
    const std::string config_text = r.str();
    if (strip_epoch_line(config_text) != strip_epoch_line(model.config.canonical_text()))
        throw ContractError("checkpoint config does not match the model's config");

    auto named = model.named_parameters();
    const std::uint64_t count = r.u64();
    if (count != named.size())
        throw ContractError("checkpoint holds " + std::to_string(count) +
                            " parameters, model has " + std::to_string(named.size()));
    for (auto& [name, p] : named) {
        const std::string got = r.str();
        if (got != name)
            throw ContractError("checkpoint parameter '" + got + "' does not match '" + name +
                                "'");
        const std::uint64_t rank = r.u64();
        if (rank != static_cast<std::uint64_t>(p.ndim()))
            throw ContractError("checkpoint rank mismatch for '" + name + "'");
        for (Index d : p.shape())
            if (r.u64() != static_cast<std::uint64_t>(d))
                throw ContractError("checkpoint shape mismatch for '" + name + "'");
        Array values = r.array();
        if (values.size() != p.numel())
            throw ContractError("checkpoint size mismatch for '" + name + "'");
        p.value_flat() = values;
        p.zero_grad();
    }

    state.adam.learning_rate = r.f64();
    state.adam.weight_decay = r.f64();
    state.adam.beta1 = r.f64();
    state.adam.beta2 = r.f64();
    state.adam.epsilon = r.f64();
    state.adam.step = r.u64();
    const std::uint64_t nm = r.u64();
    if (nm != named.size()) throw ContractError("checkpoint optimizer state size mismatch");
    state.adam.m.clear();
    state.adam.v.clear();
    for (std::uint64_t i = 0; i < nm; ++i) state.adam.m.push_back(r.array());
    for (std::uint64_t i = 0; i < nm; ++i) state.adam.v.push_back(r.array());

    state.rng.deserialize(r.str());
    state.epoch = static_cast<Index>(r.i64());
    state.best_epoch = static_cast<Index>(r.i64());
    state.best_val_macro = r.f64();
}

}  // namespace hgmn
