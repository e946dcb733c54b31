#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "plansieve/catalog.hpp"
#include "plansieve/collector.hpp"
#include "plansieve/model.hpp"
#include "plansieve/planspace.hpp"
#include "plansieve/workloadgen.hpp"

namespace plansieve {

/// Everything one experiment needs; mirrors the JSON config file.
struct ExperimentSpec {
    std::string schema_path;
    std::string workload_path;             // either this ...
    std::string templates_path;            // ... or templates + target_count
    int scale_target = 0;
    EstimatorSpec default_estimator{EstimatorKind::Oracle, 1, 0.35};
    EstimatorSpec surrogate_estimator{EstimatorKind::Independence, 2, 0.0};
    std::vector<double> mix_fractions{0.0, 0.25, 0.5, 0.75, 1.0};
    ModelConfig model;
    TrainConfig training;
    SubOptConfig suboptimality;
    PlanShape plan_shape = PlanShape::Bushy;
    L1Weights l1_weights;
    MutationPolicy mutation;
    int stream_window = 25;
    std::uint64_t seed = 42;

    void validate() const;
    static ExperimentSpec load(const std::string& path);
    std::string to_json_text() const;
    std::string config_hash() const;

    /// Model config with the vocabulary geometry filled in and unset seeds
    /// defaulted from the experiment seed.
    ModelConfig model_for(const Vocabulary& vocab) const;
    TrainConfig training_with_seed() const;
};

/// One workload query with all derived per-query data.
struct QueryRecord {
    Query query;
    JoinGraph graph;
    std::map<int, std::vector<Subplan>> subplans_by_k;
    CardinalityAssignment truth;  // oracle Y, every connected subset (k >= 1)
    CardinalityAssignment est;    // system-default estimates Y-hat (k >= 2)
    double p_err = 1.0;
    PlanLabel label = PlanLabel::Optimal;

    std::size_t total_subplans() const;  // k >= 2
};

std::vector<QueryRecord> label_workload(const Catalog& catalog,
                                        const std::vector<Query>& queries,
                                        const ExperimentSpec& spec);

struct DatasetBundle {
    Vocabulary vocab;
    std::vector<LabeledExample> train;  // augmented replicas included
    std::vector<LabeledExample> test;   // replica 0 only
    std::vector<std::string> train_query_ids;
    std::vector<std::string> test_query_ids;
    std::size_t suboptimal_queries = 0;
    std::size_t total_queries = 0;
    bool single_class_warning = false;
};

/// Offline phase: label, featurize, split 70/30 by query id, augment the
/// training side.
DatasetBundle build_dataset(const Catalog& catalog, const std::vector<QueryRecord>& records,
                            const ExperimentSpec& spec);

void save_dataset(const DatasetBundle& bundle, const std::vector<QueryRecord>& records,
                  const std::string& out_dir);
std::vector<LabeledExample> load_examples(const std::string& path);

struct ScenarioResult {
    double mix_fraction = 0.0;
    ConfusionMatrix matrix;
};

struct EvaluationReport {
    std::vector<ScenarioResult> scenarios;
    ConfusionMatrix offline_test;      // eval-offline only
    ConfusionMatrix baseline_train;
    ConfusionMatrix baseline_test;
    std::vector<double> window_accuracy;  // simulate-stream only
    std::map<std::string, double> l1_summary;
    std::string config_hash;
    std::uint64_t seed = 0;

    std::string to_json_text() const;
    static EvaluationReport from_json_text(const std::string& text);
    std::string to_text_table() const;
};

/// Builds the rho side of every test query from a seeded truth/surrogate mix
/// at each fraction and scores the classifier against the offline labels.
EvaluationReport eval_online(const Catalog& catalog, const std::vector<QueryRecord>& records,
                             const DatasetBundle& bundle, const ModelParams& params,
                             const ExperimentSpec& spec);

struct StreamResult {
    EvaluationReport report;
    CardinalityCache cache;
};

/// Sequential processing: predict with the current cache, execute the
/// estimate-driven plan, feed its log back, repeat.
StreamResult simulate_stream(const Catalog& catalog, const std::vector<QueryRecord>& records,
                             const DatasetBundle& bundle, const ModelParams& params,
                             const ExperimentSpec& spec);

void write_report(const EvaluationReport& report, const std::string& out_dir,
                  const std::string& stem);

std::string render_confusion(const ConfusionMatrix& m, const std::string& title);

}  // namespace plansieve
