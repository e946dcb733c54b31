#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "plansieve/harness.hpp"

namespace fs = std::filesystem;
using namespace plansieve;
using nlohmann::json;

namespace {

struct CommonArgs {
    std::string config;
    std::string out = "out";
    std::string data;
    std::string model_path;
    std::uint64_t seed = 0;
    bool seed_given = false;
};

ExperimentSpec load_spec(const CommonArgs& args) {
    ExperimentSpec spec = ExperimentSpec::load(args.config);
    if (args.seed_given) spec.seed = args.seed;
    return spec;
}

Catalog make_catalog(const ExperimentSpec& spec) {
    return Catalog::generate(SchemaSpec::load(spec.schema_path));
}

std::vector<Query> make_workload(const ExperimentSpec& spec, const Catalog& catalog,
                                 bool* budget_exhausted = nullptr) {
    if (!spec.workload_path.empty()) return load_workload(spec.workload_path, catalog);
    std::vector<Query> templates = load_workload(spec.templates_path, catalog);
    Workload scaled = scale_workload(templates, catalog, spec.scale_target, spec.seed,
                                     spec.mutation);
    if (budget_exhausted) *budget_exhausted = scaled.budget_exhausted;
    if (scaled.budget_exhausted)
        std::cerr << "warning: retry budget exhausted, generated "
                  << scaled.queries.size() << " of " << spec.scale_target << " queries\n";
    return scaled.queries;
}

int vocab_size_from_stats(const std::string& data_dir) {
    std::ifstream in((fs::path(data_dir) / "dataset_stats.json").string());
    if (!in) throw DataError("cannot open dataset stats in '" + data_dir + "'");
    json j = json::parse(in);
    return j.at("vocab_id_bound").get<int>();
}

int cmd_gen_catalog(const CommonArgs& args) {
    SchemaSpec schema = SchemaSpec::load(args.config);
    Catalog catalog = Catalog::generate(schema);
    json summary;
    summary["tables"] = json::array();
    for (int t = 0; t < catalog.table_count(); ++t)
        summary["tables"].push_back(
            {{"name", catalog.table_name(t)}, {"rows", catalog.row_count(t)}});
    fs::create_directories(args.out);
    std::ofstream out((fs::path(args.out) / "catalog_summary.json").string());
    out << summary.dump(2) << '\n';
    std::cout << summary.dump(2) << '\n';
    return 0;
}

int cmd_gen_workload(const CommonArgs& args) {
    ExperimentSpec spec = load_spec(args);
    if (spec.templates_path.empty())
        throw ConfigError("gen-workload needs 'templates' and 'scale_target' in the config");
    Catalog catalog = make_catalog(spec);
    std::vector<Query> templates = load_workload(spec.templates_path, catalog);
    DomainStore store;
    Workload scaled = scale_workload(templates, catalog, spec.scale_target, spec.seed,
                                     spec.mutation, &store);
    fs::create_directories(args.out);
    save_workload(scaled.queries, catalog, (fs::path(args.out) / "workload.jsonl").string());
    store.save((fs::path(args.out) / "domains.jsonl").string());
    std::cout << "generated " << scaled.queries.size() << " queries ("
              << scaled.candidates_tried << " candidates tried)\n";
    if (scaled.budget_exhausted) {
        std::cerr << "warning: retry budget exhausted before reaching the target\n";
        return 3;
    }
    return 0;
}

int cmd_build_dataset(const CommonArgs& args) {
    ExperimentSpec spec = load_spec(args);
    Catalog catalog = make_catalog(spec);
    std::vector<Query> workload = make_workload(spec, catalog);
    std::vector<QueryRecord> records = label_workload(catalog, workload, spec);
    DatasetBundle bundle = build_dataset(catalog, records, spec);
    save_dataset(bundle, records, args.out);
    if (spec.workload_path.empty())
        save_workload(workload, catalog,
                      (fs::path(args.out) / "generated_workload.jsonl").string());

    // vocab geometry for downstream commands
    {
        std::ifstream in((fs::path(args.out) / "dataset_stats.json").string());
        json stats = json::parse(in);
        in.close();
        stats["vocab_size"] = bundle.vocab.size();
        stats["vocab_id_bound"] = bundle.vocab.id_bound();
        stats["table_count"] = catalog.table_count();
        std::ofstream out((fs::path(args.out) / "dataset_stats.json").string());
        out << stats.dump(2) << '\n';
    }
    std::cout << "dataset: " << bundle.train.size() << " train / " << bundle.test.size()
              << " test examples, " << bundle.suboptimal_queries << "/"
              << bundle.total_queries << " queries sub-optimal\n";
    if (bundle.single_class_warning)
        std::cerr << "warning: dataset is single-class; training will degenerate\n";
    return 0;
}

int cmd_train(const CommonArgs& args) {
    ExperimentSpec spec = load_spec(args);
    std::string data = args.data.empty() ? args.out : args.data;
    auto train_set = load_examples((fs::path(data) / "train.jsonl").string());
    auto test_set = load_examples((fs::path(data) / "test.jsonl").string());
    ModelConfig mcfg = spec.model;
    if (mcfg.vocab_size == 0) mcfg.vocab_size = vocab_size_from_stats(data);
    if (mcfg.seed == 0) mcfg.seed = spec.seed;
    TrainConfig tcfg = spec.training;
    if (tcfg.seed == 0) tcfg.seed = spec.seed;

    TrainResult result = train(train_set, test_set, mcfg, tcfg);
    if (result.single_class_warning)
        std::cerr << "warning: training set contains a single class\n";

    fs::create_directories(args.out);
    save_checkpoint(result.params, (fs::path(args.out) / "model.ckpt").string());
    json hist = json::array();
    for (const auto& e : result.history)
        hist.push_back({{"epoch", e.epoch},
                        {"train_loss", e.train_loss},
                        {"eval_accuracy", e.eval_accuracy},
                        {"lr", e.lr}});
    std::ofstream hout((fs::path(args.out) / "history.json").string());
    hout << json{{"best_epoch", result.best_epoch},
                 {"best_accuracy", result.best_accuracy},
                 {"epochs", hist}}
                .dump(2)
         << '\n';
    std::cout << "best held-out accuracy " << result.best_accuracy << " at epoch "
              << result.best_epoch << '\n';
    return 0;
}

int cmd_train_baseline(const CommonArgs& args) {
    ExperimentSpec spec = load_spec(args);
    std::string data = args.data.empty() ? args.out : args.data;
    auto train_set = load_examples((fs::path(data) / "train.jsonl").string());
    auto test_set = load_examples((fs::path(data) / "test.jsonl").string());

    std::vector<double> values;
    std::vector<int> labels;
    for (const auto& ex : train_set) {
        if (ex.replica_id != 0) continue;  // the baseline sees each query once
        values.push_back(ex.l1_aggregate);
        labels.push_back(ex.label);
    }
    DecisionTree tree = train_baseline_dt(values, labels, {1, 2, 3, 4, 5}, 5, spec.seed);

    auto score = [&](const std::vector<LabeledExample>& set) {
        ConfusionMatrix m;
        for (const auto& ex : set) {
            if (ex.replica_id != 0) continue;
            PlanLabel pred = tree.predict(ex.l1_aggregate) == 1 ? PlanLabel::SubOptimal
                                                                : PlanLabel::Optimal;
            PlanLabel actual = ex.label == 1 ? PlanLabel::SubOptimal : PlanLabel::Optimal;
            m.add(pred, actual);
        }
        return m;
    };

    EvaluationReport report;
    report.config_hash = spec.config_hash();
    report.seed = spec.seed;
    report.baseline_train = score(train_set);
    report.baseline_test = score(test_set);
    fs::create_directories(args.out);
    std::ofstream tout((fs::path(args.out) / "baseline.json").string());
    tout << tree.to_json_text() << '\n';
    write_report(report, args.out, "baseline_report");
    std::cout << report.to_text_table();
    return 0;
}

int cmd_eval_offline(const CommonArgs& args) {
    ExperimentSpec spec = load_spec(args);
    std::string data = args.data.empty() ? args.out : args.data;
    auto test_set = load_examples((fs::path(data) / "test.jsonl").string());
    ModelParams params = load_checkpoint(args.model_path);

    EvaluationReport report;
    report.config_hash = spec.config_hash();
    report.seed = spec.seed;
    for (const auto& ex : test_set) {
        ForwardResult r = forward(params, ex);
        PlanLabel pred = r.p_suboptimal > spec.training.decision_threshold
                             ? PlanLabel::SubOptimal
                             : PlanLabel::Optimal;
        PlanLabel actual = ex.label == 1 ? PlanLabel::SubOptimal : PlanLabel::Optimal;
        report.offline_test.add(pred, actual);
    }
    write_report(report, args.out, "offline_report");
    std::cout << report.to_text_table();
    return 0;
}

int cmd_eval_online(const CommonArgs& args) {
    ExperimentSpec spec = load_spec(args);
    Catalog catalog = make_catalog(spec);
    std::vector<Query> workload = make_workload(spec, catalog);
    std::vector<QueryRecord> records = label_workload(catalog, workload, spec);
    DatasetBundle bundle = build_dataset(catalog, records, spec);
    ModelParams params = load_checkpoint(args.model_path);
    EvaluationReport report = eval_online(catalog, records, bundle, params, spec);
    write_report(report, args.out, "online_report");
    std::cout << report.to_text_table();
    return 0;
}

int cmd_simulate_stream(const CommonArgs& args) {
    ExperimentSpec spec = load_spec(args);
    Catalog catalog = make_catalog(spec);
    std::vector<Query> workload = make_workload(spec, catalog);
    std::vector<QueryRecord> records = label_workload(catalog, workload, spec);
    DatasetBundle bundle = build_dataset(catalog, records, spec);
    ModelParams params = load_checkpoint(args.model_path);
    StreamResult result = simulate_stream(catalog, records, bundle, params, spec);
    write_report(result.report, args.out, "stream_report");
    result.cache.save((fs::path(args.out) / "cache.jsonl").string());
    std::cout << result.report.to_text_table();
    return 0;
}

int cmd_l1(const CommonArgs& args, const std::string& query_id) {
    ExperimentSpec spec = load_spec(args);
    Catalog catalog = make_catalog(spec);
    std::vector<Query> workload = make_workload(spec, catalog);
    std::vector<QueryRecord> records = label_workload(catalog, workload, spec);
    for (const auto& rec : records) {
        if (!query_id.empty() && rec.query.id != query_id) continue;
        std::vector<PositionVectorPair> pairs;
        for (const auto& [k, subs] : rec.subplans_by_k)
            pairs.push_back(position_vectors(subs, rec.truth, rec.est));
        L1Report report = l1_report(pairs, spec.l1_weights);
        json j{{"query_id", rec.query.id},
               {"aggregate", report.aggregate},
               {"p_error", rec.p_err},
               {"label", rec.label == PlanLabel::SubOptimal ? "sub-optimal" : "optimal"}};
        for (const auto& [k, v] : report.per_k) j["per_k"][std::to_string(k)] = v;
        std::cout << j.dump(2) << '\n';
        if (!args.out.empty()) {
            fs::create_directories(args.out);
            std::ofstream out(
                (fs::path(args.out) / ("l1_" + rec.query.id + ".json")).string());
            out << j.dump(2) << '\n';
        }
        if (!query_id.empty()) return 0;
    }
    if (!query_id.empty()) throw DataError("query '" + query_id + "' not found in workload");
    return 0;
}

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_config = true) {
    auto* opt = cmd->add_option("--config", args.config, "configuration file");
    if (needs_config) opt->required();
    cmd->add_option("--out", args.out, "output directory");
    cmd->add_option("--data", args.data, "dataset directory (defaults to --out)");
    cmd->add_option("--seed", args.seed, "override the experiment seed")
        ->each([&](const std::string&) { args.seed_given = true; });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale lab for flagging sub-optimal query plans from subplan orderings"};
    app.require_subcommand(1);
    CommonArgs args;
    std::string query_id;

    auto* gen_catalog = app.add_subcommand("gen-catalog", "validate and summarize a schema");
    add_common(gen_catalog, args);
    auto* gen_workload =
        app.add_subcommand("gen-workload", "scale templates into a full workload");
    add_common(gen_workload, args);
    auto* build = app.add_subcommand("build-dataset", "label and featurize the workload");
    add_common(build, args);
    auto* train_cmd = app.add_subcommand("train", "train the classifier");
    add_common(train_cmd, args);
    auto* baseline = app.add_subcommand("train-baseline", "fit the L1-only decision tree");
    add_common(baseline, args);
    auto* offline = app.add_subcommand("eval-offline", "score the model on the test split");
    add_common(offline, args);
    offline->add_option("--model", args.model_path, "model checkpoint")->required();
    auto* online = app.add_subcommand("eval-online", "score under truth/surrogate mixes");
    add_common(online, args);
    online->add_option("--model", args.model_path, "model checkpoint")->required();
    auto* stream = app.add_subcommand("simulate-stream", "sequential cache-refinement run");
    add_common(stream, args);
    stream->add_option("--model", args.model_path, "model checkpoint")->required();
    auto* l1 = app.add_subcommand("l1", "L1 report for one query (or the whole workload)");
    add_common(l1, args);
    l1->add_option("--query", query_id, "query id");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (gen_catalog->parsed()) return cmd_gen_catalog(args);
        if (gen_workload->parsed()) return cmd_gen_workload(args);
        if (build->parsed()) return cmd_build_dataset(args);
        if (train_cmd->parsed()) return cmd_train(args);
        if (baseline->parsed()) return cmd_train_baseline(args);
        if (offline->parsed()) return cmd_eval_offline(args);
        if (online->parsed()) return cmd_eval_online(args);
        if (stream->parsed()) return cmd_simulate_stream(args);
        if (l1->parsed()) return cmd_l1(args, query_id);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
