#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "specfuse/config.hpp"
#include "specfuse/datasynth.hpp"
#include "specfuse/losses.hpp"
#include "specfuse/model.hpp"
#include "specfuse/optim.hpp"

namespace specfuse {

struct ConfusionCounts {
    std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::uint64_t total() const { return tp + fp + tn + fn; }
    double accuracy() const {
        return total() == 0 ? 0.0
                            : static_cast<double>(tp + tn) / static_cast<double>(total());
    }
};

struct EpochStats {
    std::size_t epoch = 0;
    double focal = 0.0, supcon = 0.0, f_center = 0.0, total = 0.0;
    double median_total = 0.0; // median of per-batch totals within the epoch
    double train_acc = 0.0;
};

struct DomainResult {
    Domain domain = Domain::t2i;
    ConfusionCounts counts;
};

struct MetricsReport {
    std::vector<EpochStats> epochs;
    std::vector<DomainResult> test_results;
    double wall_seconds = 0.0;
    std::string config_hash;

    double accuracy_for(Domain d) const {
        for (const auto& r : test_results) {
            if (r.domain == d) return r.counts.accuracy();
        }
        throw ContractError("no test result for domain " + to_string(d));
    }
};

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Decision rule everywhere: p > 0.5 means fake.
inline ConfusionCounts evaluate_with_predictor(
    const std::vector<ImageSample>& samples,
    const std::function<double(const ImageSample&)>& predict) {
    if (samples.empty()) throw ContractError("evaluate: test set must be nonempty");
    ConfusionCounts c;
    for (const ImageSample& s : samples) {
        const bool pred_fake = predict(s) > 0.5;
        if (s.label == 1) {
            pred_fake ? ++c.tp : ++c.fn;
        } else {
            pred_fake ? ++c.fp : ++c.tn;
        }
    }
    return c;
}

inline double predict_probability(const ImageSample& s, const ParameterSet& params,
                                  const ModelConfig& cfg, const ForwardOptions& opts = {}) {
    return forward(s, params, cfg, opts).p->values[0];
}

inline ConfusionCounts evaluate_params(const std::vector<ImageSample>& samples,
                                       const ParameterSet& params, const ModelConfig& cfg,
                                       const ForwardOptions& opts = {}) {
    return evaluate_with_predictor(samples, [&](const ImageSample& s) {
        return predict_probability(s, params, cfg, opts);
    });
}

/// Per-domain confusion counts over a (possibly mixed-domain) test set,
/// ordered by domain index.
inline std::vector<DomainResult> evaluate_grouped(
    const std::vector<ImageSample>& samples,
    const std::function<double(const ImageSample&)>& predict) {
    if (samples.empty()) throw ContractError("evaluate: test set must be nonempty");
    std::map<Domain, ConfusionCounts> by_domain;
    for (const ImageSample& s : samples) {
        ConfusionCounts& c = by_domain[s.domain];
        const bool pred_fake = predict(s) > 0.5;
        if (s.label == 1) {
            pred_fake ? ++c.tp : ++c.fn;
        } else {
            pred_fake ? ++c.fp : ++c.tn;
        }
    }
    std::vector<DomainResult> out;
    for (const auto& [d, c] : by_domain) out.push_back({d, c});
    return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainResult {
    ParameterSet params;
    MetricsReport report;
};

namespace detail {

inline void check_finite(const LossBreakdown& b, std::size_t epoch, std::size_t batch) {
    const std::pair<const char*, double> parts[] = {
        {"focal", b.focal}, {"supcon", b.supcon}, {"f_center", b.f_center}, {"total", b.total}};
    for (const auto& [name, v] : parts) {
        if (!std::isfinite(v)) {
            throw std::runtime_error("non-finite loss: component=" + std::string(name) +
                                     " epoch=" + std::to_string(epoch) +
                                     " batch=" + std::to_string(batch));
        }
    }
}

inline void check_finite_forward(const ForwardResult& fr, std::size_t epoch, std::size_t batch) {
    auto scan = [&](const std::vector<double>& v, const char* what) {
        for (double x : v) {
            if (!std::isfinite(x)) {
                throw std::runtime_error("non-finite loss input: component=" + std::string(what) +
                                         " epoch=" + std::to_string(epoch) +
                                         " batch=" + std::to_string(batch));
            }
        }
    };
    scan(fr.embedding->values, "embedding");
    scan(fr.p->values, "p");
    scan(fr.f_fre_vec->values, "f_fre");
    // Overflow inside the normalization shows up as a finite z with the
    // wrong norm (embedding^2 -> inf -> z = 0), so check the contract, not
    // just finiteness.
    double zsq = 0.0;
    for (double x : fr.z->values) zsq += x * x;
    if (!(std::abs(std::sqrt(zsq) - 1.0) <= 1e-6)) {
        throw std::runtime_error("non-finite loss input: component=z epoch=" +
                                 std::to_string(epoch) + " batch=" + std::to_string(batch));
    }
}

inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace detail

/// Runs the full training loop on a prepared split. Deterministic in
/// (config, split): initialization, batch order and arithmetic are all
/// derived from the config seed.
inline TrainResult train_on_split(const RunConfig& cfg, const CorpusSplit& split) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();

    TrainResult result;
    result.params = init_detector_params(cfg.model, cfg.loss, cfg.seed);
    Optimizer opt = cfg.optimizer.make();
    ClassCenters centers{result.params.at("centers")};

    ForwardOptions fopts;
    fopts.disable_fre_branch = cfg.ablation.disable_fre_branch;
    fopts.disable_attention = cfg.ablation.disable_attention;

    LossWeights weights = cfg.loss;
    if (cfg.ablation.disable_f_center) weights.lambda2 = 0.0;
    const bool include_f_center =
        !cfg.ablation.disable_f_center && !cfg.ablation.disable_fre_branch;

    std::vector<std::size_t> order(split.train.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng = Rng::stream(cfg.seed, "shuffle-epoch-" + std::to_string(epoch));
        shuffle_rng.shuffle(order);

        EpochStats stats;
        stats.epoch = epoch;
        std::vector<double> batch_totals;
        std::size_t correct = 0;

        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
            const std::size_t end = std::min(start + cfg.batch_size, order.size());
            const std::size_t n = end - start;

            std::vector<TensorPtr> p, z, f;
            std::vector<int> y;
            p.reserve(n);
            z.reserve(n);
            f.reserve(n);
            y.reserve(n);
            for (std::size_t i = start; i < end; ++i) {
                const ImageSample& s = split.train[order[i]];
                ForwardResult fr = forward(s, result.params, cfg.model, fopts);
                detail::check_finite_forward(fr, epoch, batch_index);
                p.push_back(fr.p);
                z.push_back(fr.z);
                f.push_back(fr.f_fre_vec);
                y.push_back(s.label);
                if ((fr.p->values[0] > 0.5) == (s.label == 1)) ++correct;
            }

            FscOptions lopts;
            lopts.include_supcon = n >= 2;
            lopts.include_f_center = include_f_center;
            FscResult loss = fsc_total(p, z, f, y, centers, weights, lopts);
            detail::check_finite(loss.breakdown, epoch, batch_index);

            backward(loss.total);
            opt.step(result.params);
            result.params.zero_grad();

            stats.focal += loss.breakdown.focal;
            stats.supcon += loss.breakdown.supcon;
            stats.f_center += loss.breakdown.f_center;
            stats.total += loss.breakdown.total;
            batch_totals.push_back(loss.breakdown.total);
        }

        const double nb = static_cast<double>(batch_totals.size());
        if (nb > 0) {
            stats.focal /= nb;
            stats.supcon /= nb;
            stats.f_center /= nb;
            stats.total /= nb;
        }
        stats.median_total = detail::median(batch_totals);
        stats.train_acc =
            order.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(order.size());
        result.report.epochs.push_back(stats);
    }

    result.report.test_results = evaluate_grouped(split.test, [&](const ImageSample& s) {
        return predict_probability(s, result.params, cfg.model, fopts);
    });
    result.report.config_hash = cfg.hash();
    result.report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

// ---------------------------------------------------------------------------
// Artifact files: metrics CSV, summary JSON, checkpoint
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace detail

inline void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& report) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write metrics CSV: " + path.string());
    os << "# specfuse-metrics v1\n";
    os << "epoch,focal,supcon,f_center,total,train_acc\n";
    for (const EpochStats& e : report.epochs) {
        os << e.epoch << ',' << detail::fmt_double(e.focal) << ',' << detail::fmt_double(e.supcon)
           << ',' << detail::fmt_double(e.f_center) << ',' << detail::fmt_double(e.total) << ','
           << detail::fmt_double(e.train_acc) << '\n';
    }
}

inline nlohmann::ordered_json report_to_json(const MetricsReport& report) {
    nlohmann::ordered_json j;
    j["format_version"] = 1;
    j["config_hash"] = report.config_hash;
    j["wall_seconds"] = report.wall_seconds;
    nlohmann::ordered_json tests = nlohmann::ordered_json::array();
    for (const DomainResult& r : report.test_results) {
        tests.push_back({{"domain", to_string(r.domain)},
                         {"tp", r.counts.tp},
                         {"fp", r.counts.fp},
                         {"tn", r.counts.tn},
                         {"fn", r.counts.fn},
                         {"accuracy", r.counts.accuracy()}});
    }
    j["test_results"] = tests;
    nlohmann::ordered_json epochs = nlohmann::ordered_json::array();
    for (const EpochStats& e : report.epochs) {
        epochs.push_back({{"epoch", e.epoch},
                          {"focal", e.focal},
                          {"supcon", e.supcon},
                          {"f_center", e.f_center},
                          {"total", e.total},
                          {"median_total", e.median_total},
                          {"train_acc", e.train_acc}});
    }
    j["epochs"] = epochs;
    return j;
}

/// Writes metrics.csv, checkpoint.bin and summary.json under the run's
/// output directory.
inline void write_train_artifacts(const RunConfig& cfg, const TrainResult& result) {
    const std::filesystem::path out(cfg.output_dir);
    std::filesystem::create_directories(out);
    write_metrics_csv(out / "metrics.csv", result.report);
    save_checkpoint(out / "checkpoint.bin", result.params);
    std::ofstream summary(out / "summary.json");
    if (!summary) throw IoError("cannot write summary: " + (out / "summary.json").string());
    summary << report_to_json(result.report).dump(2) << '\n';
}

/// Full `train` entry point: builds the protocol split, trains, and writes
/// the artifact files under the output dir.
inline TrainResult train(const RunConfig& cfg) {
    RunConfig c = cfg;
    c.normalize();
    c.validate();
    CorpusSplit split = build_split(c.corpus, c.protocol.split());
    TrainResult result = train_on_split(c, split);
    write_train_artifacts(c, result);
    return result;
}

/// Read-only evaluation of a checkpoint against a test set.
inline MetricsReport evaluate_checkpoint(const RunConfig& cfg,
                                         const std::filesystem::path& checkpoint,
                                         const std::vector<ImageSample>& test_set) {
    RunConfig c = cfg;
    c.normalize();
    c.validate();
    ParameterSet params = init_detector_params(c.model, c.loss, c.seed);
    load_checkpoint(checkpoint, params);
    ForwardOptions fopts;
    fopts.disable_fre_branch = c.ablation.disable_fre_branch;
    fopts.disable_attention = c.ablation.disable_attention;
    MetricsReport report;
    report.test_results = evaluate_grouped(test_set, [&](const ImageSample& s) {
        return predict_probability(s, params, c.model, fopts);
    });
    report.config_hash = c.hash();
    return report;
}

// ---------------------------------------------------------------------------
// Ablation suite (Table-4 style)
// ---------------------------------------------------------------------------

struct AblationRow {
    std::string name; // "full", "wo_fre_branch", "wo_f_center", "wo_attention"
    std::map<Domain, double> accuracy;
    std::map<Domain, double> delta_vs_full;
};

struct AblationReport {
    Domain train_domain = Domain::t2i;
    std::vector<AblationRow> rows;

    const AblationRow& row(const std::string& name) const {
        for (const auto& r : rows) {
            if (r.name == name) return r;
        }
        throw ContractError("no ablation row named '" + name + "'");
    }
};

/// Trains the full model plus the three single-component ablations under
/// identical seeds and corpora, then evaluates every variant on all four
/// domains: the held-out in-domain test side for the train domain and the
/// complete sample set for the others. Variants run concurrently; each run
/// owns its parameters and RNG streams.
inline AblationReport run_ablation_suite(const RunConfig& base, bool parallel = true) {
    RunConfig cfg = base;
    cfg.normalize();
    cfg.protocol.mode = Protocol::in_domain;
    cfg.protocol.test_domain = cfg.protocol.train_domain;
    cfg.validate();

    const CorpusSplit train_split = build_split(cfg.corpus, cfg.protocol.split());
    std::map<Domain, std::vector<ImageSample>> test_sets;
    for (Domain d : kAllDomains) {
        if (d == cfg.protocol.train_domain) {
            test_sets[d] = train_split.test;
        } else {
            test_sets[d] = generate_domain_samples(cfg.corpus, d, 0,
                                                   cfg.corpus.samples_per_domain_per_class);
        }
    }

    struct Variant {
        std::string name;
        AblationFlags flags;
    };
    const std::vector<Variant> variants = {
        {"full", {}},
        {"wo_fre_branch", {true, false, false}},
        {"wo_f_center", {false, true, false}},
        {"wo_attention", {false, false, true}},
    };

    auto run_variant = [&](const Variant& v) {
        RunConfig vc = cfg;
        vc.ablation = v.flags;
        TrainResult tr = train_on_split(vc, train_split);
        ForwardOptions fopts;
        fopts.disable_fre_branch = v.flags.disable_fre_branch;
        fopts.disable_attention = v.flags.disable_attention;
        AblationRow row;
        row.name = v.name;
        for (const auto& [d, samples] : test_sets) {
            row.accuracy[d] = evaluate_params(samples, tr.params, vc.model, fopts).accuracy();
        }
        return row;
    };

    AblationReport report;
    report.train_domain = cfg.protocol.train_domain;
    if (parallel) {
        std::vector<std::future<AblationRow>> futures;
        futures.reserve(variants.size());
        for (const Variant& v : variants) {
            futures.push_back(std::async(std::launch::async, run_variant, std::cref(v)));
        }
        for (auto& f : futures) report.rows.push_back(f.get());
    } else {
        for (const Variant& v : variants) report.rows.push_back(run_variant(v));
    }

    const AblationRow& full = report.row("full");
    for (AblationRow& r : report.rows) {
        for (const auto& [d, acc] : r.accuracy) {
            r.delta_vs_full[d] = acc - full.accuracy.at(d);
        }
    }
    return report;
}

/// Table-2 style aggregate: a domain's cross-domain score is the mean
/// accuracy over all supplied runs in which it appears as a test set and
/// was not the training domain. `train_domains[i]` names what reports[i]
/// was trained on.
inline std::map<Domain, double> cross_domain_scores(const std::vector<MetricsReport>& reports,
                                                    const std::vector<Domain>& train_domains) {
    if (reports.size() != train_domains.size()) {
        throw ContractError("cross_domain_scores: one train domain per report required");
    }
    std::map<Domain, double> sums;
    std::map<Domain, std::size_t> counts;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        for (const DomainResult& r : reports[i].test_results) {
            if (r.domain == train_domains[i]) continue;
            sums[r.domain] += r.counts.accuracy();
            ++counts[r.domain];
        }
    }
    std::map<Domain, double> out;
    for (const auto& [d, s] : sums) out[d] = s / static_cast<double>(counts[d]);
    return out;
}

inline nlohmann::ordered_json ablation_to_json(const AblationReport& report) {
    nlohmann::ordered_json j;
    j["format_version"] = 1;
    j["train_domain"] = to_string(report.train_domain);
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const AblationRow& r : report.rows) {
        nlohmann::ordered_json acc, delta;
        for (const auto& [d, a] : r.accuracy) acc[to_string(d)] = a;
        for (const auto& [d, dv] : r.delta_vs_full) delta[to_string(d)] = dv;
        rows.push_back({{"name", r.name}, {"accuracy", acc}, {"delta_vs_full", delta}});
    }
    j["rows"] = rows;
    return j;
}

} // namespace specfuse
