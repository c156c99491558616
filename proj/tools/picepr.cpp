// Command-line front end: ingestion, pipeline runs, head/projection
// training, evaluation, comparison and cost reporting, all driven by one
// TOML-style config file plus a persistent artifact directory.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "picepr/artifacts.hpp"
#include "picepr/components.hpp"
#include "picepr/config.hpp"
#include "picepr/contents.hpp"
#include "picepr/contrastive.hpp"
#include "picepr/corpus.hpp"
#include "picepr/cost.hpp"
#include "picepr/embeddings.hpp"
#include "picepr/metrics.hpp"
#include "picepr/mlp.hpp"
#include "picepr/util.hpp"

namespace fs = std::filesystem;
using namespace picepr;

namespace {

struct CommonOptions {
    std::string config_path;
    std::uint64_t seed = 42;
    int parallel = 4;
};

struct SplitOptions {
    std::size_t train_count = 0;
    std::size_t val_count = 0;
    std::size_t test_count = 0;
};

SplitSpec resolve_split(const Corpus& corpus, const SplitOptions& opts, std::uint64_t seed) {
    SplitSpec spec;
    spec.seed = seed;
    if (opts.train_count + opts.val_count + opts.test_count == 0) {
        // Default 64/16/20, the proportion the reference datasets use.
        spec.train_count = corpus.size() * 64 / 100;
        spec.val_count = corpus.size() * 16 / 100;
        spec.test_count = corpus.size() - spec.train_count - spec.val_count;
    } else {
        spec.train_count = opts.train_count;
        spec.val_count = opts.val_count;
        spec.test_count = opts.test_count;
    }
    return spec;
}

struct Runtime {
    Config config;
    FacetList facets = FacetList::placeholder();
    Gateway gateway;
    std::optional<TemplateSet> templates;
    RequestDefaults defaults;
};

std::unique_ptr<Runtime> make_runtime(const CommonOptions& common) {
    if (common.config_path.empty()) {
        throw UsageError("this command needs --config");
    }
    auto rt = std::make_unique<Runtime>();
    rt->config = Config::load(common.config_path);
    rt->templates = TemplateSet::load(rt->config.get_string("templates.dir", "templates"));
    std::string facets_file = rt->config.get_string("templates.facets_file");
    if (!facets_file.empty()) rt->facets = FacetList::load(facets_file);
    register_backends_from_config(rt->gateway, rt->config, rt->facets);
    std::string cache_dir = rt->config.get_string("gateway.cache_dir");
    if (!cache_dir.empty()) rt->gateway.set_cache(std::make_shared<CacheStore>(cache_dir));
    RetryPolicy retry;
    retry.max_retries = static_cast<int>(rt->config.get_int("gateway.retry_max", 3));
    retry.initial_delay_ms = static_cast<int>(rt->config.get_int("gateway.retry_initial_ms", 500));
    rt->gateway.set_retry_policy(retry);
    rt->gateway.set_max_in_flight(common.parallel);
    rt->defaults.temperature = rt->config.get_double("gateway.temperature", 0.2);
    rt->defaults.max_output_tokens =
        static_cast<int>(rt->config.get_int("gateway.max_output_tokens", 1024));
    return rt;
}

void write_json(const fs::path& path, const ordered_json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("IoError", "cannot write " + path.string());
    out << j.dump(2) << "\n";
}

int run_ingest(const std::string& format, const std::string& in_path, const std::string& out_path,
               bool print_stats) {
    CorpusFormat fmt;
    if (format == "essays") fmt = CorpusFormat::EssaysCsv;
    else if (format == "kaggle") fmt = CorpusFormat::KaggleCsv;
    else throw UsageError("--format must be essays or kaggle");

    Corpus corpus = load_corpus(in_path, fmt);
    save_corpus_jsonl(corpus, out_path);

    ordered_json manifest;
    manifest["command"] = "ingest";
    manifest["format"] = format;
    manifest["input"] = in_path;
    manifest["output"] = out_path;
    manifest["samples"] = corpus.size();
    manifest["schema"] = PersonalitySchema::of(corpus.schema).name();
    manifest["finished_at"] = iso8601_now();
    write_json(out_path + ".manifest.json", manifest);

    std::cout << "ingested " << corpus.size() << " samples ("
              << PersonalitySchema::of(corpus.schema).name() << ") -> " << out_path << "\n";
    if (print_stats) {
        CorpusStats cs = stats(corpus);
        for (const auto& d : cs.dimensions) {
            std::cout << "  " << d.code << ": p(1) = " << d.fraction_ones
                      << (d.imbalanced ? "  [imbalanced]" : "") << "\n";
        }
    }
    return 0;
}

const Corpus& pick_part(const SplitResult& parts, const std::string& name) {
    if (name == "train") return parts.train;
    if (name == "val") return parts.val;
    if (name == "test") return parts.test;
    throw UsageError("--split must be train, val or test");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PICEPR personality-recognition pipelines"};
    app.require_subcommand(1);

    CommonOptions common;
    app.add_option("--config", common.config_path, "TOML-style config file");
    app.add_option("--seed", common.seed, "seed for every random choice (default 42)");
    app.add_option("--parallel", common.parallel, "worker pool size / gateway in-flight cap");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "load a raw CSV dataset into corpus JSONL");
    std::string ingest_format, ingest_in, ingest_out;
    bool ingest_stats = false;
    ingest->add_option("--format", ingest_format, "essays | kaggle")->required();
    ingest->add_option("--in", ingest_in, "input CSV")->required();
    ingest->add_option("--out", ingest_out, "output corpus JSONL")->required();
    ingest->add_flag("--stats", ingest_stats, "print per-dimension label balance");

    // shared run options
    SplitOptions split_opts;
    std::string corpus_path, split_name = "test", run_dir;

    auto add_run_options = [&](CLI::App* cmd) {
        cmd->add_option("--corpus", corpus_path, "corpus JSONL artifact")->required();
        cmd->add_option("--split", split_name, "train | val | test (default test)");
        cmd->add_option("--train-count", split_opts.train_count, "split sizes (default 64/16/20)");
        cmd->add_option("--val-count", split_opts.val_count, "");
        cmd->add_option("--test-count", split_opts.test_count, "");
        cmd->add_option("--run-dir", run_dir, "run artifact directory")->required();
    };

    // run-contents
    auto* run_c = app.add_subcommand("run-contents", "run a Contents pipeline variant");
    std::string contents_variant = "picepr";
    run_c->add_option("--variant", contents_variant, "regular | regular_tuned | picepr | picepr2");
    add_run_options(run_c);

    // run-embeddings
    auto* run_e = app.add_subcommand("run-embeddings", "run an Embeddings pipeline variant");
    std::string embeddings_variant = "vpr";
    bool use_facets = false;
    bool mimic_facets = false;
    run_e->add_option("--variant", embeddings_variant, "vr | vrt | vat | vpr");
    run_e->add_flag("--facets", use_facets, "concatenate the 77 facet features");
    run_e->add_flag("--mimic-facets", mimic_facets, "merge facet scores into the Mimic prompt");
    add_run_options(run_e);

    // train-head
    auto* train_cmd = app.add_subcommand("train-head", "train the MLP classifier head");
    std::string emb_path, val_emb_path, head_out, loss_name = "focal";
    std::string truth_path;
    std::vector<std::size_t> hidden = {64};
    double alpha = 1.0, gamma = 2.0, lr = 0.05;
    int epochs = 100, batch = 16;
    train_cmd->add_option("--embeddings", emb_path, "train embeddings JSONL")->required();
    train_cmd->add_option("--val-embeddings", val_emb_path, "validation embeddings JSONL");
    train_cmd->add_option("--corpus", truth_path, "labeled corpus JSONL")->required();
    train_cmd->add_option("--out", head_out, "output head JSON")->required();
    train_cmd->add_option("--hidden", hidden, "hidden layer widths");
    train_cmd->add_option("--loss", loss_name, "mbce | focal");
    train_cmd->add_option("--alpha", alpha, "focal alpha");
    train_cmd->add_option("--gamma", gamma, "focal gamma");
    train_cmd->add_option("--lr", lr, "learning rate");
    train_cmd->add_option("--epochs", epochs, "training epochs");
    train_cmd->add_option("--batch", batch, "mini-batch size");

    // finetune-projection
    auto* proj_cmd =
        app.add_subcommand("finetune-projection", "contrastive-tune a linear projection");
    std::string proj_out, aug_pos_path, aug_neg_path;
    double margin = 1.0, proj_lr = 0.01;
    int proj_epochs = 50;
    proj_cmd->add_option("--embeddings", emb_path, "base embeddings JSONL")->required();
    proj_cmd->add_option("--corpus", truth_path, "labeled corpus JSONL")->required();
    proj_cmd->add_option("--out", proj_out, "output projection JSON")->required();
    proj_cmd->add_option("--aug-positive", aug_pos_path, "mimic positive embeddings JSONL");
    proj_cmd->add_option("--aug-negative", aug_neg_path, "mimic negative embeddings JSONL");
    proj_cmd->add_option("--margin", margin, "contrastive margin");
    proj_cmd->add_option("--lr", proj_lr, "learning rate");
    proj_cmd->add_option("--epochs", proj_epochs, "full-batch steps");

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "score predictions against ground truth");
    std::string pred_path, report_out, truth_split = "all";
    eval_cmd->add_option("--truth", truth_path, "labeled corpus JSONL")->required();
    eval_cmd->add_option("--pred", pred_path, "predictions JSONL")->required();
    eval_cmd->add_option("--out", report_out, "report JSON output path");
    eval_cmd->add_option("--split", truth_split,
                         "restrict truth to one part: train | val | test (default: whole file)");
    eval_cmd->add_option("--train-count", split_opts.train_count, "split sizes (default 64/16/20)");
    eval_cmd->add_option("--val-count", split_opts.val_count, "");
    eval_cmd->add_option("--test-count", split_opts.test_count, "");

    // compare
    auto* cmp_cmd = app.add_subcommand("compare", "transition flows + McNemar significance");
    std::string baseline_path, proposed_path, flows_out;
    cmp_cmd->add_option("--truth", truth_path, "labeled corpus JSONL")->required();
    cmp_cmd->add_option("--baseline", baseline_path, "baseline predictions JSONL")->required();
    cmp_cmd->add_option("--proposed", proposed_path, "proposed predictions JSONL")->required();
    cmp_cmd->add_option("--out", flows_out, "flow JSON output path");
    cmp_cmd->add_option("--split", truth_split,
                        "restrict truth to one part: train | val | test (default: whole file)");
    cmp_cmd->add_option("--train-count", split_opts.train_count, "split sizes (default 64/16/20)");
    cmp_cmd->add_option("--val-count", split_opts.val_count, "");
    cmp_cmd->add_option("--test-count", split_opts.test_count, "");

    // cost
    auto* cost_cmd = app.add_subcommand("cost", "token/cost report over run manifests");
    std::vector<std::string> manifest_paths;
    std::string cost_out;
    cost_cmd->add_option("--manifest", manifest_paths, "run manifest.json paths")->required();
    cost_cmd->add_option("--out", cost_out, "cost report JSON output path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) {
            return run_ingest(ingest_format, ingest_in, ingest_out, ingest_stats);
        }

        if (*run_c) {
            auto rt = make_runtime(common);
            Corpus corpus = load_corpus_jsonl(corpus_path);
            SplitResult parts = split(corpus, resolve_split(corpus, split_opts, common.seed));
            const Corpus& part = pick_part(parts, split_name);

            ContentsRunConfig cfg;
            cfg.variant = variant_from_name(contents_variant);
            cfg.classify_backend = rt->config.role_backend("classify");
            if (cfg.variant == ContentsVariant::Picepr ||
                cfg.variant == ContentsVariant::Picepr2Shot ||
                cfg.variant == ContentsVariant::RegularTunedDatasetOnly) {
                cfg.summary_backend = rt->config.role_backend("summary");
            }
            if (cfg.variant == ContentsVariant::Picepr ||
                cfg.variant == ContentsVariant::Picepr2Shot) {
                cfg.psycho_backend = rt->config.role_backend("psycho");
            }
            cfg.artifact_dir = run_dir;
            cfg.split_name = split_name;
            cfg.seed = common.seed;
            cfg.workers = common.parallel;
            cfg.defaults = rt->defaults;
            if (cfg.variant == ContentsVariant::Picepr2Shot) cfg.exemplar_source = parts.train;

            if (cfg.variant == ContentsVariant::RegularTunedDatasetOnly) {
                auto result = run_rt_dataset_build(cfg, parts.train, rt->gateway, *rt->templates);
                std::cout << "fine-tune corpus: " << result.corpus_path.string() << " ("
                          << result.exchanges << " exchanges, ER "
                          << (result.ledger.total_rows ? error_rate(result.ledger) : 0.0) << ")\n";
                return 0;
            }
            auto result = run_contents(cfg, part, rt->gateway, *rt->templates, rt->facets);
            std::cout << (result.reused_completed_run ? "reused completed run: " : "run: ")
                      << run_dir << "\n"
                      << "predictions " << result.predictions.size() << "/"
                      << result.ledger.total_rows << ", ER "
                      << (result.ledger.total_rows ? error_rate(result.ledger) : 0.0) << "\n";
            return 0;
        }

        if (*run_e) {
            auto rt = make_runtime(common);
            Corpus corpus = load_corpus_jsonl(corpus_path);
            SplitResult parts = split(corpus, resolve_split(corpus, split_opts, common.seed));

            EmbeddingsRunConfig cfg;
            cfg.variant = embeddings_variant_from_name(embeddings_variant);
            cfg.vector_backend = rt->config.role_backend("vector");
            if (cfg.variant == EmbeddingsVariant::Picepr) {
                cfg.summary_backend = rt->config.role_backend("summary");
            }
            if (cfg.variant == EmbeddingsVariant::Picepr ||
                cfg.variant == EmbeddingsVariant::AugmentedTuned) {
                cfg.mimic_backend = rt->config.role_backend("mimic");
            }
            cfg.use_facets = use_facets;
            cfg.mimic_facets = mimic_facets;
            if (use_facets || mimic_facets) cfg.psycho_backend = rt->config.role_backend("psycho");
            cfg.artifact_dir = run_dir;
            cfg.seed = common.seed;
            cfg.workers = common.parallel;
            cfg.defaults = rt->defaults;
            cfg.epochs = static_cast<int>(rt->config.get_int("training.epochs", 100));
            cfg.learning_rate = rt->config.get_double("training.learning_rate", 0.05);
            cfg.margin = rt->config.get_double("training.margin", 1.0);

            auto result =
                run_embeddings(cfg, parts.train, parts.val, parts.test, rt->gateway, *rt->templates,
                               rt->facets);
            std::cout << (result.reused_completed_run ? "reused completed run: " : "run: ")
                      << run_dir << "\n"
                      << "test predictions " << result.predictions.size() << ", mean BA "
                      << result.test_mean_ba << "\n";
            return 0;
        }

        if (*train_cmd) {
            Corpus truth = load_corpus_jsonl(truth_path);
            auto train_emb = load_embeddings_jsonl(emb_path);
            auto train_rows = to_labeled_vectors(train_emb, truth, nullptr, nullptr);
            std::vector<LabeledVector> val_rows;
            if (!val_emb_path.empty()) {
                val_rows = to_labeled_vectors(load_embeddings_jsonl(val_emb_path), truth, nullptr,
                                              nullptr);
            }
            if (train_rows.empty()) throw Error("EmptyDataset", "no labeled training rows");

            MlpConfig mc;
            mc.input_dim = train_rows.front().input.size();
            mc.hidden = hidden;
            mc.output_dim = PersonalitySchema::of(truth.schema).size();
            mc.seed = common.seed;
            TrainConfig tc;
            tc.loss = loss_name == "mbce" ? LossSpec{LossKind::Mbce, 1.0, 0.0}
                                          : LossSpec{LossKind::Focal, alpha, gamma};
            tc.learning_rate = lr;
            tc.epochs = epochs;
            tc.batch_size = batch;
            tc.seed = common.seed;

            TrainOutcome outcome = train_head(train_rows, val_rows, mc, tc);
            outcome.params.save(head_out);
            std::cout << "head -> " << head_out << " (best epoch "
                      << outcome.history.best_epoch << ")\n";
            return 0;
        }

        if (*proj_cmd) {
            Corpus truth = load_corpus_jsonl(truth_path);
            auto base = load_embeddings_jsonl(emb_path);
            std::vector<ContrastivePair> pairs;
            if (!aug_pos_path.empty() && !aug_neg_path.empty()) {
                auto pos = load_embeddings_jsonl(aug_pos_path);
                auto neg = load_embeddings_jsonl(aug_neg_path);
                std::vector<std::pair<std::string, EmbeddingVec>> p, n;
                for (auto& e : pos) p.emplace_back(e.sample_id, e.vector);
                for (auto& e : neg) n.emplace_back(e.sample_id, e.vector);
                pairs = build_mimic_pairs(base, p, n, margin);
            }
            auto label_pairs = build_label_pairs(base, truth, margin, 2000);
            pairs.insert(pairs.end(), label_pairs.begin(), label_pairs.end());

            Projection projection =
                finetune_projection_contrastive(pairs, {proj_epochs, proj_lr});
            projection.save(proj_out);
            std::cout << "projection -> " << proj_out << " (pairs " << pairs.size()
                      << ", mean loss " << mean_contrastive_loss(projection, pairs) << ")\n";
            return 0;
        }

        auto load_truth = [&]() {
            Corpus truth = load_corpus_jsonl(truth_path);
            if (truth_split == "all") return truth;
            SplitResult parts = split(truth, resolve_split(truth, split_opts, common.seed));
            return pick_part(parts, truth_split);
        };

        if (*eval_cmd) {
            Corpus truth = load_truth();
            auto preds = load_predictions_jsonl(pred_path, truth.schema);
            EvalReport report = evaluate_predictions(preds, truth);
            std::cout << report_to_text(report);
            if (!report_out.empty()) write_json(report_out, report_to_json(report));
            return 0;
        }

        if (*cmp_cmd) {
            Corpus truth = load_truth();
            auto baseline = load_predictions_jsonl(baseline_path, truth.schema);
            auto proposed = load_predictions_jsonl(proposed_path, truth.schema);
            TransitionFlows flows = transitions(truth, baseline, proposed);
            McNemarResult mc = mcnemar(flows.b, flows.c);
            ordered_json j = flows.to_json();
            j["chi2"] = mc.chi2;
            j["p"] = mc.p;
            j["significant"] = mc.p < 0.05;
            std::cout << j.dump(2) << "\n";
            std::cout << "McNemar: b=" << mc.b << " c=" << mc.c << " chi2=" << mc.chi2
                      << " p=" << mc.p << " -> "
                      << (mc.p < 0.05 ? "significant" : "not significant")
                      << " at alpha=0.05\n";
            if (!flows_out.empty()) write_json(flows_out, j);
            return 0;
        }

        if (*cost_cmd) {
            if (common.config_path.empty()) throw UsageError("cost needs --config for prices");
            Config config = Config::load(common.config_path);
            PriceTable prices = config.prices();
            double overhead = config.get_double("cost.overhead_multiplier", 1.0);
            std::set<std::string> overhead_variants;
            for (const auto& v : split(config.get_string("cost.overhead_variants"), ',')) {
                std::string name = trim(v);
                if (!name.empty()) overhead_variants.insert(name);
            }
            std::vector<RunUsage> runs;
            for (const auto& path : manifest_paths) {
                std::ifstream in(path);
                if (!in) throw Error("IoError", "cannot open manifest: " + path);
                auto manifest = RunManifest::from_json(ordered_json::parse(in));
                RunUsage usage;
                usage.run_name = manifest.run_id;
                usage.variant = manifest.variant;
                usage.per_backend = manifest.usage_per_backend;
                // Processing charges are configured input, per run id with a
                // per-variant fallback.
                usage.processing_units = config.get_double(
                    "processing." + manifest.run_id,
                    config.get_double("processing." + manifest.variant, 0.0));
                runs.push_back(std::move(usage));
            }
            // Externally measured cost points (baselines without manifests)
            // enter the comparison straight from configuration.
            for (const auto& name : config.sections_under("external")) {
                const std::string base = "external." + name + ".";
                RunUsage usage;
                usage.run_name = name;
                usage.variant = config.get_string(base + "variant", "external");
                TokenUsage tokens;
                tokens.input_tokens =
                    static_cast<std::uint64_t>(config.get_int(base + "input_tokens", 0));
                tokens.output_tokens =
                    static_cast<std::uint64_t>(config.get_int(base + "output_tokens", 0));
                usage.per_backend[config.get_string(base + "backend")] = tokens;
                usage.processing_units = config.get_double(base + "processing_units", 0.0);
                runs.push_back(std::move(usage));
            }
            ordered_json report = cost_estimate(runs, prices, overhead, overhead_variants);
            std::cout << report.dump(2) << "\n";
            if (!cost_out.empty()) write_json(cost_out, report);
            return 0;
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: Unexpected: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
