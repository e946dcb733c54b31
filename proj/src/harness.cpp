#include "plansieve/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "plansieve/l1error.hpp"

namespace plansieve {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

EstimatorSpec estimator_from_json(const json& j) {
    EstimatorSpec e;
    e.kind = estimator_kind_from_name(j.value("kind", std::string("independence")));
    e.seed = j.value("seed", std::uint64_t{0});
    e.noise_sigma = j.value("noise_sigma", 0.0);
    return e;
}

json estimator_to_json(const EstimatorSpec& e) {
    return json{{"kind", estimator_kind_name(e.kind)},
                {"seed", e.seed},
                {"noise_sigma", e.noise_sigma}};
}

std::string resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return p;
    fs::path path(p);
    if (path.is_absolute()) return p;
    return (base / path).string();
}

}  // namespace

void ExperimentSpec::validate() const {
    if (schema_path.empty()) throw ConfigError("experiment needs a schema path");
    if (workload_path.empty() && templates_path.empty())
        throw ConfigError("experiment needs a workload or templates with scale_target");
    if (!templates_path.empty() && workload_path.empty() && scale_target <= 0)
        throw ConfigError("scale_target must be positive when scaling templates");
    for (std::size_t i = 1; i < mix_fractions.size(); ++i)
        if (mix_fractions[i] < mix_fractions[i - 1])
            throw ConfigError("mix_fractions must be sorted ascending");
    for (double f : mix_fractions)
        if (f < 0.0 || f > 1.0) throw ConfigError("mix fractions must lie in [0, 1]");
    if (default_estimator.kind == surrogate_estimator.kind &&
        default_estimator.seed == surrogate_estimator.seed)
        throw ConfigError("default and surrogate estimators must be distinct instances "
                          "(same kind and seed given)");
    if (suboptimality.c < 1.0) throw ConfigError("sub-optimality threshold c must be >= 1");
}

ExperimentSpec ExperimentSpec::load(const std::string& path) {
    json j = json::parse(read_file(path));
    fs::path base = fs::path(path).parent_path();

    ExperimentSpec spec;
    spec.schema_path = resolve(base, j.at("schema").get<std::string>());
    spec.workload_path = resolve(base, j.value("workload", std::string()));
    spec.templates_path = resolve(base, j.value("templates", std::string()));
    spec.scale_target = j.value("scale_target", 0);
    if (j.contains("default_estimator"))
        spec.default_estimator = estimator_from_json(j["default_estimator"]);
    if (j.contains("surrogate_estimator"))
        spec.surrogate_estimator = estimator_from_json(j["surrogate_estimator"]);
    if (j.contains("mix_fractions"))
        spec.mix_fractions = j["mix_fractions"].get<std::vector<double>>();
    if (j.contains("model")) spec.model = ModelConfig::from_json_text(j["model"].dump());
    if (j.contains("training"))
        spec.training = TrainConfig::from_json_text(j["training"].dump());
    if (j.contains("suboptimality")) {
        spec.suboptimality.c = j["suboptimality"].value("c", 1.0);
        spec.suboptimality.epsilon = j["suboptimality"].value("epsilon", 1e-9);
    }
    std::string shape = j.value("plan_shape", std::string("bushy"));
    if (shape == "bushy")
        spec.plan_shape = PlanShape::Bushy;
    else if (shape == "left_deep")
        spec.plan_shape = PlanShape::LeftDeep;
    else
        throw ConfigError("plan_shape must be 'bushy' or 'left_deep'");
    spec.l1_weights.decay = j.value("l1_decay", 0.5);
    if (j.contains("mutation")) {
        spec.mutation.keep = j["mutation"].value("keep", 0.4);
        spec.mutation.revalue = j["mutation"].value("revalue", 0.4);
        spec.mutation.drop = j["mutation"].value("drop", 0.2);
    }
    spec.stream_window = j.value("stream_window", 25);
    spec.seed = j.value("seed", std::uint64_t{42});
    spec.validate();
    return spec;
}

std::string ExperimentSpec::to_json_text() const {
    json j;
    j["schema"] = schema_path;
    j["workload"] = workload_path;
    j["templates"] = templates_path;
    j["scale_target"] = scale_target;
    j["default_estimator"] = estimator_to_json(default_estimator);
    j["surrogate_estimator"] = estimator_to_json(surrogate_estimator);
    j["mix_fractions"] = mix_fractions;
    j["model"] = json::parse(model.to_json_text());
    j["training"] = json::parse(training.to_json_text());
    j["suboptimality"] = {{"c", suboptimality.c}, {"epsilon", suboptimality.epsilon}};
    j["plan_shape"] = plan_shape == PlanShape::Bushy ? "bushy" : "left_deep";
    j["l1_decay"] = l1_weights.decay;
    j["mutation"] = {{"keep", mutation.keep},
                     {"revalue", mutation.revalue},
                     {"drop", mutation.drop}};
    j["stream_window"] = stream_window;
    j["seed"] = seed;
    return j.dump(2);
}

std::string ExperimentSpec::config_hash() const {
    std::string text = to_json_text();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

ModelConfig ExperimentSpec::model_for(const Vocabulary& vocab) const {
    ModelConfig cfg = model;
    if (cfg.vocab_size == 0) cfg.vocab_size = vocab.id_bound();
    if (cfg.seed == 0) cfg.seed = seed;
    return cfg;
}

TrainConfig ExperimentSpec::training_with_seed() const {
    TrainConfig cfg = training;
    if (cfg.seed == 0) cfg.seed = seed;
    return cfg;
}

std::size_t QueryRecord::total_subplans() const {
    std::size_t n = 0;
    for (const auto& [k, subs] : subplans_by_k) n += subs.size();
    return n;
}

namespace {

std::map<int, std::vector<std::pair<TableMask, double>>> per_k_truth_of(
    const QueryRecord& record) {
    std::map<int, std::vector<std::pair<TableMask, double>>> out;
    for (const auto& [k, subs] : record.subplans_by_k) {
        auto& bucket = out[k];
        for (const auto& sp : subs) bucket.emplace_back(sp.tables, record.truth.at(sp.tables));
    }
    return out;
}

std::vector<PositionVectorPair> pairs_for(const QueryRecord& record,
                                          const CardinalityAssignment& truth_like,
                                          const CardinalityAssignment& est) {
    std::vector<PositionVectorPair> pairs;
    for (const auto& [k, subs] : record.subplans_by_k)
        pairs.push_back(position_vectors(subs, truth_like, est));
    return pairs;
}

}  // namespace

std::vector<QueryRecord> label_workload(const Catalog& catalog,
                                        const std::vector<Query>& queries,
                                        const ExperimentSpec& spec) {
    std::vector<QueryRecord> records;
    records.reserve(queries.size());
    for (const Query& q : queries) {
        QueryRecord rec;
        rec.query = q;
        rec.graph = infer_join_closure(q);
        rec.subplans_by_k = enumerate_subplans(rec.graph);

        for (TableId t : rec.graph.tables) {
            Subplan leaf = rec.graph.subplan(mask_of(t));
            rec.truth.set(mask_of(t),
                          static_cast<double>(true_cardinality(catalog, leaf)),
                          Provenance::True);
        }
        for (const auto& [k, subs] : rec.subplans_by_k)
            for (const Subplan& sp : subs)
                rec.truth.set(sp.tables,
                              static_cast<double>(true_cardinality(catalog, sp)),
                              Provenance::True);

        SurrogateContext ctx;
        ctx.query_id = q.id;
        auto per_k = per_k_truth_of(rec);
        ctx.per_k_truth = &per_k;
        for (const auto& [k, subs] : rec.subplans_by_k)
            for (const Subplan& sp : subs)
                rec.est.set(sp.tables, surrogate(spec.default_estimator, sp, catalog, ctx),
                            Provenance::Estimated);

        if (rec.subplans_by_k.empty()) {
            rec.p_err = 1.0;
            rec.label = PlanLabel::Optimal;
        } else {
            rec.p_err = p_error(rec.graph, rec.est, rec.truth, spec.plan_shape);
            rec.label = label_from_p_error(rec.p_err, spec.suboptimality);
        }
        records.push_back(std::move(rec));
    }
    return records;
}

DatasetBundle build_dataset(const Catalog& catalog, const std::vector<QueryRecord>& records,
                            const ExperimentSpec& spec) {
    std::vector<TableMask> observed;
    for (const auto& rec : records)
        for (const auto& [k, subs] : rec.subplans_by_k)
            for (const auto& sp : subs) observed.push_back(sp.tables);
    DatasetBundle bundle{Vocabulary::build(catalog.table_count(), observed), {}, {}, {}, {},
                         0, 0, false};

    // query-level split: replicas of one query stay on one side
    std::vector<std::string> ids;
    for (const auto& rec : records) ids.push_back(rec.query.id);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (ids.size() != records.size())
        throw DataError("workload contains duplicate query ids");
    Rng rng(derive_seed(spec.seed, "split"));
    rng.shuffle(ids);
    std::size_t n_train = static_cast<std::size_t>(
        std::round(spec.training.train_fraction * static_cast<double>(ids.size())));
    if (ids.size() > 1) n_train = std::clamp<std::size_t>(n_train, 1, ids.size() - 1);
    std::set<std::string> train_ids(ids.begin(), ids.begin() + n_train);

    int max_len = spec.model.max_len;
    for (const auto& rec : records) {
        QueryExample ex;
        ex.query_id = rec.query.id;
        ex.pairs = pairs_for(rec, rec.truth, rec.est);
        ex.label = rec.label == PlanLabel::SubOptimal ? 1 : 0;

        bundle.total_queries += 1;
        if (rec.label == PlanLabel::SubOptimal) bundle.suboptimal_queries += 1;

        if (train_ids.count(rec.query.id)) {
            bundle.train_query_ids.push_back(rec.query.id);
            auto replicas = augment_permute(ex, spec.training.augment_replicas,
                                            derive_seed(spec.seed, "augment"));
            for (const auto& rep : replicas)
                bundle.train.push_back(
                    encode_example(rep, bundle.vocab, max_len, spec.l1_weights));
        } else {
            bundle.test_query_ids.push_back(rec.query.id);
            bundle.test.push_back(encode_example(ex, bundle.vocab, max_len, spec.l1_weights));
        }
    }
    bundle.single_class_warning =
        bundle.suboptimal_queries == 0 || bundle.suboptimal_queries == bundle.total_queries;
    return bundle;
}

namespace {

json example_to_json(const LabeledExample& ex) {
    return json{{"query_id", ex.query_id},
                {"replica", ex.replica_id},
                {"tokens", ex.sequence.tokens},
                {"mask", std::vector<int>(ex.sequence.attention_mask.begin(),
                                          ex.sequence.attention_mask.end())},
                {"true_length", ex.sequence.true_length},
                {"l1", ex.l1_aggregate},
                {"l1_max", ex.l1_max},
                {"label", ex.label}};
}

LabeledExample example_from_json(const json& j) {
    LabeledExample ex;
    ex.query_id = j.at("query_id").get<std::string>();
    ex.replica_id = j.at("replica").get<int>();
    ex.sequence.tokens = j.at("tokens").get<std::vector<int>>();
    for (int v : j.at("mask").get<std::vector<int>>())
        ex.sequence.attention_mask.push_back(static_cast<std::uint8_t>(v));
    ex.sequence.true_length = j.at("true_length").get<int>();
    ex.l1_aggregate = j.at("l1").get<double>();
    ex.l1_max = j.at("l1_max").get<double>();
    ex.label = j.at("label").get<int>();
    return ex;
}

void write_examples(const std::vector<LabeledExample>& examples, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write dataset file '" + path + "'");
    for (const auto& ex : examples) out << example_to_json(ex).dump() << '\n';
}

}  // namespace

void save_dataset(const DatasetBundle& bundle, const std::vector<QueryRecord>& records,
                  const std::string& out_dir) {
    fs::create_directories(out_dir);
    write_examples(bundle.train, (fs::path(out_dir) / "train.jsonl").string());
    write_examples(bundle.test, (fs::path(out_dir) / "test.jsonl").string());

    std::ofstream queries((fs::path(out_dir) / "queries.jsonl").string());
    std::set<std::string> train_ids(bundle.train_query_ids.begin(),
                                    bundle.train_query_ids.end());
    for (const auto& rec : records) {
        json j{{"query_id", rec.query.id},
               {"label", rec.label == PlanLabel::SubOptimal ? "sub-optimal" : "optimal"},
               {"p_error", rec.p_err},
               {"subplans", rec.total_subplans()},
               {"split", train_ids.count(rec.query.id) ? "train" : "test"}};
        queries << j.dump() << '\n';
    }

    json stats{{"queries", bundle.total_queries},
               {"suboptimal_queries", bundle.suboptimal_queries},
               {"train_examples", bundle.train.size()},
               {"test_examples", bundle.test.size()},
               {"train_queries", bundle.train_query_ids.size()},
               {"test_queries", bundle.test_query_ids.size()},
               {"single_class_warning", bundle.single_class_warning}};
    std::ofstream stats_out((fs::path(out_dir) / "dataset_stats.json").string());
    stats_out << stats.dump(2) << '\n';
}

std::vector<LabeledExample> load_examples(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file '" + path + "'");
    std::vector<LabeledExample> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(example_from_json(json::parse(line)));
    }
    return out;
}

namespace {

/// rho side of one query under a truth/surrogate mix: the first
/// ceil(f * N) subplans of a per-query seeded shuffle take their true
/// values, the rest come from the surrogate estimator. The shuffle is
/// shared across fractions so coverage grows monotonically with f.
CardinalityAssignment mixed_assignment(const Catalog& catalog, const QueryRecord& record,
                                       double fraction, const ExperimentSpec& spec) {
    std::vector<TableMask> masks;
    for (const auto& [k, subs] : record.subplans_by_k)
        for (const auto& sp : subs) masks.push_back(sp.tables);
    Rng rng(derive_seed(spec.seed, "mix/" + record.query.id));
    rng.shuffle(masks);
    std::size_t n_truth = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(masks.size())));
    n_truth = std::min(n_truth, masks.size());
    std::set<TableMask> take_truth(masks.begin(), masks.begin() + n_truth);

    SurrogateContext ctx;
    ctx.query_id = record.query.id;
    auto per_k = per_k_truth_of(record);
    ctx.per_k_truth = &per_k;

    CardinalityAssignment mixed;
    for (const auto& [k, subs] : record.subplans_by_k) {
        for (const auto& sp : subs) {
            if (take_truth.count(sp.tables))
                mixed.set(sp.tables, record.truth.at(sp.tables), Provenance::True);
            else
                mixed.set(sp.tables,
                          surrogate(spec.surrogate_estimator, sp, catalog, ctx),
                          Provenance::Surrogate);
        }
    }
    return mixed;
}

std::map<std::string, double> l1_summary_of(const std::vector<QueryRecord>& records,
                                            const ExperimentSpec& spec) {
    std::map<std::string, double> summary;
    if (records.empty()) return summary;
    double total = 0.0, maxi = 0.0;
    std::size_t n = 0;
    for (const auto& rec : records) {
        if (rec.subplans_by_k.empty()) continue;
        double agg = l1_report(pairs_for(rec, rec.truth, rec.est), spec.l1_weights).aggregate;
        total += agg;
        maxi = std::max(maxi, agg);
        ++n;
    }
    if (n == 0) return summary;
    summary["mean"] = total / static_cast<double>(n);
    summary["max"] = maxi;
    summary["queries"] = static_cast<double>(n);
    return summary;
}

}  // namespace

EvaluationReport eval_online(const Catalog& catalog, const std::vector<QueryRecord>& records,
                             const DatasetBundle& bundle, const ModelParams& params,
                             const ExperimentSpec& spec) {
    EvaluationReport report;
    report.config_hash = spec.config_hash();
    report.seed = spec.seed;
    report.l1_summary = l1_summary_of(records, spec);

    for (double f : spec.mix_fractions) {
        ScenarioResult scenario;
        scenario.mix_fraction = f;
        for (const auto& rec : records) {
            CardinalityAssignment mixed = mixed_assignment(catalog, rec, f, spec);
            auto pairs = pairs_for(rec, mixed, rec.est);
            PredictOutcome out = predict(params, pairs, bundle.vocab, spec.l1_weights,
                                         spec.training.decision_threshold);
            scenario.matrix.add(out.label, rec.label);
        }
        report.scenarios.push_back(scenario);
    }
    return report;
}

StreamResult simulate_stream(const Catalog& catalog, const std::vector<QueryRecord>& records,
                             const DatasetBundle& bundle, const ModelParams& params,
                             const ExperimentSpec& spec) {
    StreamResult result;
    result.report.config_hash = spec.config_hash();
    result.report.seed = spec.seed;

    std::vector<bool> correct;
    for (const auto& rec : records) {
        SurrogateContext ctx;
        ctx.query_id = rec.query.id;
        auto per_k = per_k_truth_of(rec);
        ctx.per_k_truth = &per_k;

        CardinalityAssignment truth_like;
        for (const auto& [k, subs] : rec.subplans_by_k)
            for (const auto& sp : subs) {
                CardLookup lk =
                    result.cache.lookup(sp, spec.surrogate_estimator, catalog, ctx);
                truth_like.set(sp.tables, lk.value,
                               lk.source == LookupSource::Surrogate ? Provenance::Surrogate
                                                                    : Provenance::True);
            }

        auto pairs = pairs_for(rec, truth_like, rec.est);
        PredictOutcome out = predict(params, pairs, bundle.vocab, spec.l1_weights,
                                     spec.training.decision_threshold);
        correct.push_back(out.label == rec.label);

        // the DBMS runs the estimate-driven plan; its log feeds the cache
        if (!rec.subplans_by_k.empty()) {
            PlanTree executed = optimize(rec.graph, rec.est, spec.plan_shape);
            result.cache.ingest_log(execute_query(catalog, executed, rec.query.id));
        }
    }

    int w = std::max(1, spec.stream_window);
    for (std::size_t start = 0; start < correct.size(); start += w) {
        std::size_t end = std::min(correct.size(), start + static_cast<std::size_t>(w));
        std::size_t hits = 0;
        for (std::size_t i = start; i < end; ++i) hits += correct[i] ? 1 : 0;
        result.report.window_accuracy.push_back(static_cast<double>(hits) /
                                                static_cast<double>(end - start));
    }
    return result;
}

namespace {

json matrix_to_json(const ConfusionMatrix& m) {
    return json{{"tp", m.tp},
                {"tn", m.tn},
                {"fp", m.fp},
                {"fn", m.fn},
                {"accuracy", m.accuracy()},
                {"suboptimal_accuracy", m.suboptimal_accuracy()}};
}

ConfusionMatrix matrix_from_json(const json& j) {
    ConfusionMatrix m;
    m.tp = j.at("tp").get<std::uint64_t>();
    m.tn = j.at("tn").get<std::uint64_t>();
    m.fp = j.at("fp").get<std::uint64_t>();
    m.fn = j.at("fn").get<std::uint64_t>();
    return m;
}

std::string pct(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << v * 100.0 << "%";
    return os.str();
}

}  // namespace

std::string render_confusion(const ConfusionMatrix& m, const std::string& title) {
    double total = std::max<double>(1.0, static_cast<double>(m.total()));
    std::ostringstream os;
    os << title << "\n";
    os << "                        pred optimal        pred sub-optimal\n";
    os << "  actual optimal        " << std::left << std::setw(20)
       << (std::to_string(m.tp) + " (" + pct(m.tp / total) + ")") << std::setw(20)
       << (std::to_string(m.fn) + " (" + pct(m.fn / total) + ")") << "\n";
    os << "  actual sub-optimal    " << std::setw(20)
       << (std::to_string(m.fp) + " (" + pct(m.fp / total) + ")") << std::setw(20)
       << (std::to_string(m.tn) + " (" + pct(m.tn / total) + ")") << "\n";
    os << "  accuracy " << pct(m.accuracy()) << ", sub-optimal accuracy "
       << pct(m.suboptimal_accuracy()) << "\n";
    return os.str();
}

std::string EvaluationReport::to_json_text() const {
    json j;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    j["scenarios"] = json::array();
    for (const auto& s : scenarios)
        j["scenarios"].push_back(
            {{"mix_fraction", s.mix_fraction}, {"matrix", matrix_to_json(s.matrix)}});
    j["offline_test"] = matrix_to_json(offline_test);
    j["baseline_train"] = matrix_to_json(baseline_train);
    j["baseline_test"] = matrix_to_json(baseline_test);
    j["window_accuracy"] = window_accuracy;
    j["l1_summary"] = l1_summary;
    return j.dump(2);
}

EvaluationReport EvaluationReport::from_json_text(const std::string& text) {
    json j = json::parse(text);
    EvaluationReport r;
    r.config_hash = j.value("config_hash", std::string());
    r.seed = j.value("seed", std::uint64_t{0});
    for (const auto& js : j.value("scenarios", json::array())) {
        ScenarioResult s;
        s.mix_fraction = js.at("mix_fraction").get<double>();
        s.matrix = matrix_from_json(js.at("matrix"));
        r.scenarios.push_back(s);
    }
    if (j.contains("offline_test")) r.offline_test = matrix_from_json(j["offline_test"]);
    if (j.contains("baseline_train")) r.baseline_train = matrix_from_json(j["baseline_train"]);
    if (j.contains("baseline_test")) r.baseline_test = matrix_from_json(j["baseline_test"]);
    r.window_accuracy = j.value("window_accuracy", std::vector<double>());
    if (j.contains("l1_summary"))
        r.l1_summary = j["l1_summary"].get<std::map<std::string, double>>();
    return r;
}

std::string EvaluationReport::to_text_table() const {
    std::ostringstream os;
    for (const auto& s : scenarios) {
        std::ostringstream title;
        title << "scenario: " << std::fixed << std::setprecision(0)
              << (1.0 - s.mix_fraction) * 100 << "% surrogate + "
              << s.mix_fraction * 100 << "% true";
        os << render_confusion(s.matrix, title.str()) << "\n";
    }
    if (offline_test.total() > 0)
        os << render_confusion(offline_test, "offline test set") << "\n";
    if (baseline_train.total() > 0)
        os << render_confusion(baseline_train, "L1 decision-tree baseline (train)") << "\n";
    if (baseline_test.total() > 0)
        os << render_confusion(baseline_test, "L1 decision-tree baseline (test)") << "\n";
    if (!window_accuracy.empty()) {
        os << "window accuracy:";
        for (double a : window_accuracy) os << " " << pct(a);
        os << "\n";
    }
    return os.str();
}

void write_report(const EvaluationReport& report, const std::string& out_dir,
                  const std::string& stem) {
    fs::create_directories(out_dir);
    {
        std::ofstream out((fs::path(out_dir) / (stem + ".json")).string());
        if (!out) throw DataError("cannot write report to '" + out_dir + "'");
        out << report.to_json_text() << '\n';
    }
    {
        std::ofstream out((fs::path(out_dir) / (stem + ".txt")).string());
        out << report.to_text_table();
    }
}

}  // namespace plansieve
