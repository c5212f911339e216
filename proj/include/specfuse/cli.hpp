#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "specfuse/config.hpp"
#include "specfuse/datasynth.hpp"
#include "specfuse/gradcheck.hpp"
#include "specfuse/harness.hpp"

namespace specfuse {

namespace cli_detail {

inline RunConfig load_or_default(const std::string& config_path) {
    if (config_path.empty()) {
        RunConfig c;
        c.normalize();
        return c;
    }
    return RunConfig::load(config_path);
}

inline void print_report(const MetricsReport& report, std::ostream& os) {
    for (const DomainResult& r : report.test_results) {
        os << "test " << to_string(r.domain) << ": accuracy=" << r.counts.accuracy()
           << " (tp=" << r.counts.tp << " fp=" << r.counts.fp << " tn=" << r.counts.tn
           << " fn=" << r.counts.fn << ")\n";
    }
}

} // namespace cli_detail

/// Entry point behind tools/specfuse; also callable in-process by tests.
inline int cli_main(int argc, const char* const* argv) {
    CLI::App app{"specfuse: dual-branch spatial/frequency image forgery detector"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed_override;
    std::optional<std::string> out_override;
    app.add_option("--config", config_path, "JSON run configuration file")->capture_default_str();
    app.add_option("--seed", seed_override, "override the run seed");
    app.add_option("--out", out_override, "override the output directory");

    // gen-corpus
    auto* gen = app.add_subcommand("gen-corpus", "generate and export a synthetic corpus split");
    std::string gen_out;
    std::string gen_protocol = "in-domain";
    std::string gen_train_domain = "t2i";
    std::string gen_test_domain = "t2i";
    std::optional<std::uint64_t> gen_corpus_seed;
    std::optional<std::size_t> gen_size, gen_samples;
    gen->add_option("--out", gen_out, "corpus output directory")->required();
    gen->add_option("--protocol", gen_protocol, "in-domain or cross-domain");
    gen->add_option("--train-domain", gen_train_domain, "t2i, i2i, fs or fe");
    gen->add_option("--test-domain", gen_test_domain, "cross-domain test family");
    gen->add_option("--corpus-seed", gen_corpus_seed, "override corpus generator seed");
    gen->add_option("--size", gen_size, "image size (power of two)");
    gen->add_option("--samples", gen_samples, "samples per domain per class");

    // train
    auto* train_cmd = app.add_subcommand("train", "train the detector and write artifacts");
    std::string train_corpus_dir;
    std::optional<std::size_t> train_epochs;
    train_cmd->add_option("--corpus", train_corpus_dir,
                          "import corpus from directory instead of generating");
    train_cmd->add_option("--epochs", train_epochs, "override epoch count");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a test set");
    std::string eval_checkpoint;
    std::string eval_corpus_dir;
    eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint file")->required();
    eval_cmd->add_option("--corpus", eval_corpus_dir,
                         "import corpus from directory instead of generating");

    // ablate
    auto* ablate_cmd = app.add_subcommand("ablate", "run the four-variant ablation suite");
    bool ablate_sequential = false;
    ablate_cmd->add_flag("--sequential", ablate_sequential, "disable concurrent variant training");

    // gradcheck
    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    std::string grad_scope = "all";
    std::optional<std::uint64_t> grad_seed;
    grad_cmd->add_option("--scope", grad_scope, "ops, losses, model or all");
    grad_cmd->add_option("--gc-seed", grad_seed, "override gradcheck seed");

    // spectrum
    auto* spec_cmd = app.add_subcommand("spectrum", "dump a PNG's log-magnitude spectrum");
    std::string spec_input, spec_out_png, spec_out_raw;
    bool spec_no_center = false;
    spec_cmd->add_option("input", spec_input, "input PNG (power-of-two dims)")->required();
    spec_cmd->add_option("--out-png", spec_out_png, "normalized spectrum PNG path");
    spec_cmd->add_option("--out-raw", spec_out_raw, "raw tensor dump path");
    spec_cmd->add_flag("--no-center", spec_no_center, "keep the DC bin at (0,0)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        RunConfig cfg = cli_detail::load_or_default(config_path);
        if (seed_override) cfg.seed = *seed_override;
        if (out_override) cfg.output_dir = *out_override;
        cfg.normalize();

        if (*gen) {
            CorpusSpec spec = cfg.corpus;
            if (gen_corpus_seed) spec.seed = *gen_corpus_seed;
            if (gen_size) spec.image_size = *gen_size;
            if (gen_samples) spec.samples_per_domain_per_class = *gen_samples;
            SplitSpec split;
            split.protocol = protocol_from(gen_protocol);
            split.train_domain = domain_from(gen_train_domain);
            split.test_domain = domain_from(gen_test_domain);
            CorpusSplit corpus = build_split(spec, split);
            export_corpus(corpus, gen_out);
            std::cout << "exported " << corpus.train.size() << " train + " << corpus.test.size()
                      << " test samples to " << gen_out << "\n";
            return 0;
        }

        if (*train_cmd) {
            if (train_epochs) cfg.epochs = *train_epochs;
            cfg.validate();
            TrainResult result;
            if (!train_corpus_dir.empty()) {
                CorpusSplit split = import_corpus(train_corpus_dir);
                result = train_on_split(cfg, split);
                write_train_artifacts(cfg, result);
            } else {
                result = train(cfg);
            }
            cli_detail::print_report(result.report, std::cout);
            std::cout << "artifacts written to " << cfg.output_dir << "\n";
            return 0;
        }

        if (*eval_cmd) {
            cfg.validate();
            std::vector<ImageSample> test_set;
            if (!eval_corpus_dir.empty()) {
                test_set = import_corpus(eval_corpus_dir).test;
            } else {
                test_set = build_split(cfg.corpus, cfg.protocol.split()).test;
            }
            MetricsReport report = evaluate_checkpoint(cfg, eval_checkpoint, test_set);
            cli_detail::print_report(report, std::cout);
            return 0;
        }

        if (*ablate_cmd) {
            cfg.validate();
            AblationReport report = run_ablation_suite(cfg, !ablate_sequential);
            const std::filesystem::path out(cfg.output_dir);
            std::filesystem::create_directories(out);
            std::ofstream os(out / "ablation.json");
            if (!os) throw IoError("cannot write " + (out / "ablation.json").string());
            os << ablation_to_json(report).dump(2) << '\n';
            for (const AblationRow& row : report.rows) {
                std::cout << row.name << ":";
                for (const auto& [d, acc] : row.accuracy) {
                    std::cout << " " << to_string(d) << "=" << acc;
                }
                std::cout << "\n";
            }
            std::cout << "report written to " << (out / "ablation.json").string() << "\n";
            return 0;
        }

        if (*grad_cmd) {
            GradCheckReport report =
                run_gradcheck(gradcheck_scope_from(grad_scope), grad_seed ? *grad_seed : 20250811);
            print_gradcheck(report, std::cout);
            return report.all_pass() ? 0 : 1;
        }

        if (*spec_cmd) {
            ImageSample img;
            img.id = std::filesystem::path(spec_input).stem().string();
            read_png_rgb(spec_input, img.height, img.width, img.pixels);
            img.validate();
            SpectrumMap map = log_magnitude(fft2d(to_grayscale(img)), !spec_no_center);
            if (!spec_out_png.empty()) {
                TensorPtr normalized = spectrum_to_branch_input(map);
                write_png_gray(spec_out_png, map.height, map.width, normalized->values);
            }
            if (!spec_out_raw.empty()) {
                write_raw_tensor(spec_out_raw, {map.height, map.width}, map.values);
            }
            std::cout << "spectrum of " << spec_input << ": " << map.height << "x" << map.width
                      << (map.dc_centered ? " (dc centered)" : "") << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

} // namespace specfuse
