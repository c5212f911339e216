#pragma once

#include <cstdint>
#include <type_traits>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "specfuse/datasynth.hpp"
#include "specfuse/losses.hpp"
#include "specfuse/model.hpp"
#include "specfuse/optim.hpp"

namespace specfuse {

namespace detail {

/// Wraps one JSON object; typed reads produce field-level diagnostics and
/// done() rejects unknown keys so typos fail loudly.
class JsonObj {
public:
    JsonObj(const nlohmann::json& j, std::string path) : j_(&j), path_(std::move(path)) {
        if (!j.is_object()) throw ConfigError("config field '" + path_ + "': expected an object");
    }

    // Missing-key wrapper: reads keep defaults, done() is a no-op.
    explicit JsonObj(std::string path) : j_(nullptr), path_(std::move(path)) {}

    bool present() const { return j_ != nullptr; }

    JsonObj child(const char* key) {
        if (!j_ || !j_->contains(key)) return JsonObj(path_ + key + std::string("."));
        seen_.insert(key);
        return JsonObj((*j_)[key], path_ + key + std::string("."));
    }

    void read(const char* key, double& out) { read_impl(key, out, "number"); }
    void read(const char* key, bool& out) { read_impl(key, out, "boolean"); }
    void read(const char* key, std::string& out) { read_impl(key, out, "string"); }

    template <typename T,
              std::enable_if_t<std::is_unsigned_v<T> && !std::is_same_v<T, bool>, int> = 0>
    void read(const char* key, T& out) {
        std::uint64_t v = out;
        read_impl(key, v, "unsigned integer");
        out = static_cast<T>(v);
    }

    void read(const char* key, std::vector<std::size_t>& out) {
        if (!j_ || !j_->contains(key)) return;
        seen_.insert(key);
        const auto& v = (*j_)[key];
        if (!v.is_array()) {
            throw ConfigError("config field '" + path_ + key + "': expected an array of integers");
        }
        out.clear();
        for (const auto& e : v) {
            if (!e.is_number_unsigned()) {
                throw ConfigError("config field '" + path_ + key +
                                  "': expected an array of unsigned integers");
            }
            out.push_back(e.get<std::size_t>());
        }
    }

    template <typename Enum, typename Parser>
    void read_enum(const char* key, Enum& out, Parser parse) {
        std::string s;
        if (!j_ || !j_->contains(key)) return;
        read(key, s);
        try {
            out = parse(s);
        } catch (const ConfigError& e) {
            throw ConfigError("config field '" + path_ + key + "': " + e.what());
        }
    }

    void done() {
        if (!j_) return;
        for (auto it = j_->begin(); it != j_->end(); ++it) {
            if (!seen_.count(it.key())) {
                throw ConfigError("unknown config field '" + path_ + it.key() + "'");
            }
        }
    }

private:
    template <typename T>
    void read_impl(const char* key, T& out, const char* type_name) {
        if (!j_ || !j_->contains(key)) return;
        seen_.insert(key);
        try {
            out = (*j_)[key].get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError("config field '" + path_ + key + "': expected " +
                              std::string(type_name));
        }
    }

    const nlohmann::json* j_;
    std::string path_;
    std::set<std::string> seen_;
};

} // namespace detail

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 3e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    Optimizer make() const { return Optimizer(kind, learning_rate, beta1, beta2, epsilon); }

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("optimizer.learning_rate must be positive");
        if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("optimizer.beta1 must be in [0,1)");
        if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("optimizer.beta2 must be in [0,1)");
        if (!(epsilon > 0.0)) throw ConfigError("optimizer.epsilon must be positive");
    }
};

/// One flag per ablation row: without the frequency branch, without the
/// frequency center loss, without channel attention.
struct AblationFlags {
    bool disable_fre_branch = false;
    bool disable_f_center = false;
    bool disable_attention = false;
};

struct ProtocolConfig {
    Protocol mode = Protocol::in_domain;
    Domain train_domain = Domain::t2i;
    Domain test_domain = Domain::t2i;

    SplitSpec split() const { return SplitSpec{mode, train_domain, test_domain}; }
};

/// Everything one training/evaluation run needs; serializes to and from a
/// JSON config file in which every field is addressable.
struct RunConfig {
    std::uint64_t seed = 42;
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    std::string output_dir = "out";
    OptimizerConfig optimizer;
    CorpusSpec corpus;
    ModelConfig model;
    LossWeights loss;
    AblationFlags ablation;
    ProtocolConfig protocol;

    /// The corpus size is the single source of truth for image dims.
    void normalize() { model.image_size = corpus.image_size; }

    void validate() const {
        if (batch_size == 0) throw ConfigError("batch_size must be positive");
        if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
        optimizer.validate();
        corpus.validate(true);
        model.validate();
        loss.validate();
        if (model.image_size != corpus.image_size) {
            throw ConfigError("model.image_size must match corpus.image_size");
        }
        if (protocol.mode == Protocol::cross_domain &&
            protocol.train_domain == protocol.test_domain) {
            throw ConfigError("protocol: cross-domain requires distinct train and test domains");
        }
    }

    static RunConfig from_json(const nlohmann::json& j) {
        RunConfig c;
        detail::JsonObj root(j, "");
        std::uint64_t format_version = 1;
        root.read("format_version", format_version);
        if (format_version != 1) {
            throw ConfigError("config field 'format_version': unsupported version " +
                              std::to_string(format_version));
        }
        root.read("seed", c.seed);
        root.read("epochs", c.epochs);
        root.read("batch_size", c.batch_size);
        root.read("output_dir", c.output_dir);

        auto opt = root.child("optimizer");
        opt.read_enum("kind", c.optimizer.kind, optimizer_kind_from);
        opt.read("learning_rate", c.optimizer.learning_rate);
        opt.read("beta1", c.optimizer.beta1);
        opt.read("beta2", c.optimizer.beta2);
        opt.read("epsilon", c.optimizer.epsilon);
        opt.done();

        auto corpus = root.child("corpus");
        corpus.read("image_size", c.corpus.image_size);
        corpus.read("samples_per_domain_per_class", c.corpus.samples_per_domain_per_class);
        corpus.read("seed", c.corpus.seed);
        auto strength = corpus.child("artifact_strength");
        for (Domain d : kAllDomains) {
            strength.read(to_string(d).c_str(),
                          c.corpus.artifact_strength[static_cast<std::size_t>(d)]);
        }
        strength.done();
        corpus.done();

        auto model = root.child("model");
        model.read("rgb_stage_channels", c.model.rgb.stage_channels);
        model.read("rgb_strides", c.model.rgb.strides);
        model.read("fre_stage_channels", c.model.fre.stage_channels);
        model.read("fre_strides", c.model.fre.strides);
        model.read("attention_reduction", c.model.attention_reduction);
        model.read("head_hidden", c.model.head_hidden);
        model.read("center_dc", c.model.center_dc);
        model.done();

        auto loss = root.child("loss");
        loss.read("lambda1", c.loss.lambda1);
        loss.read("lambda2", c.loss.lambda2);
        loss.read("alpha", c.loss.alpha);
        loss.read("gamma", c.loss.gamma);
        loss.read("tau", c.loss.tau);
        loss.read("mu", c.loss.mu);
        loss.read("margin", c.loss.margin);
        loss.done();

        auto ablation = root.child("ablation");
        ablation.read("disable_fre_branch", c.ablation.disable_fre_branch);
        ablation.read("disable_f_center", c.ablation.disable_f_center);
        ablation.read("disable_attention", c.ablation.disable_attention);
        ablation.done();

        auto protocol = root.child("protocol");
        protocol.read_enum("mode", c.protocol.mode, protocol_from);
        protocol.read_enum("train_domain", c.protocol.train_domain, domain_from);
        protocol.read_enum("test_domain", c.protocol.test_domain, domain_from);
        protocol.done();

        root.done();
        c.normalize();
        c.validate();
        return c;
    }

    static RunConfig load(const std::filesystem::path& path) {
        std::ifstream is(path);
        if (!is) throw ConfigError("cannot open config file: " + path.string());
        nlohmann::json j;
        try {
            is >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
        }
        return from_json(j);
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["format_version"] = 1;
        j["seed"] = seed;
        j["epochs"] = epochs;
        j["batch_size"] = batch_size;
        j["output_dir"] = output_dir;
        j["optimizer"] = {{"kind", to_string(optimizer.kind)},
                          {"learning_rate", optimizer.learning_rate},
                          {"beta1", optimizer.beta1},
                          {"beta2", optimizer.beta2},
                          {"epsilon", optimizer.epsilon}};
        nlohmann::ordered_json strength;
        for (Domain d : kAllDomains) {
            strength[to_string(d)] = corpus.artifact_strength[static_cast<std::size_t>(d)];
        }
        j["corpus"] = {{"image_size", corpus.image_size},
                       {"samples_per_domain_per_class", corpus.samples_per_domain_per_class},
                       {"seed", corpus.seed},
                       {"artifact_strength", strength}};
        j["model"] = {{"rgb_stage_channels", model.rgb.stage_channels},
                      {"rgb_strides", model.rgb.strides},
                      {"fre_stage_channels", model.fre.stage_channels},
                      {"fre_strides", model.fre.strides},
                      {"attention_reduction", model.attention_reduction},
                      {"head_hidden", model.head_hidden},
                      {"center_dc", model.center_dc}};
        j["loss"] = {{"lambda1", loss.lambda1}, {"lambda2", loss.lambda2}, {"alpha", loss.alpha},
                     {"gamma", loss.gamma},     {"tau", loss.tau},         {"mu", loss.mu},
                     {"margin", loss.margin}};
        j["ablation"] = {{"disable_fre_branch", ablation.disable_fre_branch},
                         {"disable_f_center", ablation.disable_f_center},
                         {"disable_attention", ablation.disable_attention}};
        j["protocol"] = {{"mode", to_string(protocol.mode)},
                         {"train_domain", to_string(protocol.train_domain)},
                         {"test_domain", to_string(protocol.test_domain)}};
        return j;
    }

    /// FNV-1a over the canonical serialization; identifies a run setup.
    std::string hash() const {
        const std::uint64_t h = detail::fnv1a64(to_json().dump());
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }
};

} // namespace specfuse
