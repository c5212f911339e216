#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "specfuse/errors.hpp"
#include "specfuse/tensor.hpp"

namespace specfuse {

/// Named trainable tensors. Iteration order is lexicographic by name,
/// which makes optimizer sweeps and checkpoints deterministic.
class ParameterSet {
public:
    TensorPtr add(const std::string& name, TensorPtr t) {
        if (!t || !t->requires_grad) {
            throw ContractError("parameter '" + name + "' must require gradients");
        }
        auto [it, inserted] = params_.emplace(name, std::move(t));
        if (!inserted) throw ContractError("duplicate parameter name '" + name + "'");
        return it->second;
    }

    const TensorPtr& at(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
        return it->second;
    }

    bool contains(const std::string& name) const { return params_.count(name) != 0; }
    std::size_t size() const { return params_.size(); }

    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    void zero_grad() {
        for (auto& [name, t] : params_) t->zero_grad();
    }

private:
    std::map<std::string, TensorPtr> params_;
};

enum class OptimizerKind { sgd, adam };

inline std::string to_string(OptimizerKind k) {
    return k == OptimizerKind::sgd ? "sgd" : "adam";
}

inline OptimizerKind optimizer_kind_from(const std::string& s) {
    if (s == "sgd") return OptimizerKind::sgd;
    if (s == "adam") return OptimizerKind::adam;
    throw ConfigError("optimizer.kind: expected 'sgd' or 'adam', got '" + s + "'");
}

/// SGD or Adam over a ParameterSet. Updates parameters in place and leaves
/// gradients untouched; the caller resets them.
class Optimizer {
public:
    Optimizer(OptimizerKind kind, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
              double epsilon = 1e-8)
        : kind_(kind), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
        if (learning_rate <= 0.0) throw ConfigError("optimizer.learning_rate must be positive");
    }

    OptimizerKind kind() const { return kind_; }

    void step(ParameterSet& params) {
        for (const auto& [name, p] : params) {
            if (!p->requires_grad || p->grad.size() != p->values.size()) {
                throw ContractError("optimizer step: parameter '" + name + "' has no gradient");
            }
            if (kind_ == OptimizerKind::sgd) {
                for (std::size_t i = 0; i < p->values.size(); ++i) {
                    p->values[i] -= lr_ * p->grad[i];
                }
            } else {
                Moments& st = state_[name];
                if (st.m.size() != p->values.size()) {
                    st.m.assign(p->values.size(), 0.0);
                    st.v.assign(p->values.size(), 0.0);
                    st.t = 0;
                }
                ++st.t;
                const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(st.t));
                const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(st.t));
                for (std::size_t i = 0; i < p->values.size(); ++i) {
                    const double g = p->grad[i];
                    st.m[i] = beta1_ * st.m[i] + (1.0 - beta1_) * g;
                    st.v[i] = beta2_ * st.v[i] + (1.0 - beta2_) * g * g;
                    const double mhat = st.m[i] / bc1;
                    const double vhat = st.v[i] / bc2;
                    p->values[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
                }
            }
        }
    }

private:
    struct Moments {
        std::vector<double> m, v;
        std::uint64_t t = 0;
    };

    OptimizerKind kind_;
    double lr_, beta1_, beta2_, eps_;
    std::map<std::string, Moments> state_;
};

// ---------------------------------------------------------------------------
// Checkpoint format: little-endian binary, stable across runs.
//   magic   "SFCKPT01"  (8 bytes; version is the trailing 01)
//   u64     record count
//   records: u32 name_len, name bytes, u32 rank, u64 dims[rank], f64 values[]
// ---------------------------------------------------------------------------

namespace detail {

constexpr char kCheckpointMagic[8] = {'S', 'F', 'C', 'K', 'P', 'T', '0', '1'};

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::string& path) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError("truncated checkpoint file: " + path);
    return v;
}

} // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path.string());
    os.write(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
    detail::write_pod<std::uint64_t>(os, params.size());
    for (const auto& [name, t] : params) {
        detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t->rank()));
        for (std::size_t d : t->shape) detail::write_pod<std::uint64_t>(os, d);
        os.write(reinterpret_cast<const char*>(t->values.data()),
                 static_cast<std::streamsize>(t->values.size() * sizeof(double)));
    }
    if (!os) throw IoError("checkpoint write failed: " + path.string());
}

/// Loads values into an existing ParameterSet. Names and shapes must match
/// the checkpoint exactly; anything else is an architecture mismatch.
inline void load_checkpoint(const std::filesystem::path& path, ParameterSet& params) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path.string());
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, detail::kCheckpointMagic, sizeof(magic)) != 0) {
        throw IoError("not a specfuse checkpoint (bad magic): " + path.string());
    }
    const auto count = detail::read_pod<std::uint64_t>(is, path.string());
    if (count != params.size()) {
        throw IoError("checkpoint " + path.string() + " holds " + std::to_string(count) +
                      " parameters, model expects " + std::to_string(params.size()));
    }
    for (std::uint64_t r = 0; r < count; ++r) {
        const auto name_len = detail::read_pod<std::uint32_t>(is, path.string());
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw IoError("truncated checkpoint file: " + path.string());
        const auto rank = detail::read_pod<std::uint32_t>(is, path.string());
        Shape shape(rank);
        for (auto& d : shape) d = detail::read_pod<std::uint64_t>(is, path.string());
        if (!params.contains(name)) {
            throw IoError("checkpoint parameter '" + name + "' not present in model (" +
                          path.string() + ")");
        }
        const TensorPtr& t = params.at(name);
        if (t->shape != shape) {
            throw IoError("checkpoint parameter '" + name + "' has shape " + shape_str(shape) +
                          ", model expects " + shape_str(t->shape));
        }
        is.read(reinterpret_cast<char*>(t->values.data()),
                static_cast<std::streamsize>(t->values.size() * sizeof(double)));
        if (!is) throw IoError("truncated checkpoint file: " + path.string());
    }
}

} // namespace specfuse
