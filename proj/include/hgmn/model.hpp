#pragma once

#include <iosfwd>
#include <utility>

#include "hgmn/adam.hpp"
#include "hgmn/alignment.hpp"
#include "hgmn/hetgraph.hpp"
#include "hgmn/ordering.hpp"
#include "hgmn/ssm.hpp"

namespace hgmn {

struct ModelConfig {
    Index hidden_dim = 64;
    Index num_layers = 2;
    Index num_heads = 8;
    Index metapath_attention_dim = 128;
    double learning_rate = 5e-4;
    double weight_decay = 1e-4;
    Index num_epochs = 150;
    std::string inner_order_mode = "count";   // count | random
    std::string outer_order_mode = "degree";  // degree | random
    std::string instance_encoder = "mean";    // mean | linear
    bool zoh_exact = true;
    Index max_instances_per_node = 200;
    bool simple_paths_only = false;
    std::uint64_t seed = 0;
    Index ssm_state_size = 8;
    Index ssm_expansion = 2;
    Index ssm_conv_width = 4;

    static ModelConfig hgb_preset() { return {}; }
    static ModelConfig large_preset();

    void validate() const;
    EnumOptions enum_options() const;
    InnerOrderMode inner_mode() const;
    OuterOrderMode outer_mode() const;
    /// Fixed key order, round-trippable through the config parser.
    std::string canonical_text() const;
};

ModelConfig parse_config_text(const std::string& text);
ModelConfig parse_config_file(const std::string& path);

/// Parameter-free precomputation shared by every epoch: tokens and both
/// orderings depend only on the graph, the schemas and the config.
struct PipelinePlan {
    std::vector<Token> tokens;
    OrderedGroups inner;
    GlobalOrder outer;
};

PipelinePlan build_plan(const HeteroGraph& g, const ModelConfig& cfg);

/// Alignment parameters, one selective block per node type plus one global
/// block per layer, and the classification head.
struct HgmnModel {
    ModelConfig config;
    Index num_classes = 0;
    Index num_metapaths = 0;
    std::vector<Index> type_feature_dims;
    std::vector<std::string> type_names;
    std::vector<std::string> metapath_names;

    AlignmentParams alignment;
    struct Layer {
        std::vector<SelectiveSsmBlock> inner;  // per node type
        SelectiveSsmBlock outer;
    };
    std::vector<Layer> layers;
    Tensor head_w;  // (d' x num_classes)
    Tensor head_b;  // (num_classes)

    static HgmnModel create(const ModelConfig& cfg, const HeteroGraph& g, Rng& rng);

    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
    std::vector<Tensor> parameters() const;
    std::vector<std::string> parameter_names() const;
    void check_graph(const HeteroGraph& g) const;
};

/// align -> per layer (inner scans, outer scan) -> linear head.
Tensor forward(Tape& tape, const HgmnModel& model, const HeteroGraph& g,
               const PipelinePlan& plan);

struct Metrics {
    double loss = 0.0;
    double accuracy = 0.0;
    double micro_f1 = 0.0;
    double macro_f1 = 0.0;
};

/// Mean cross-entropy over the mask plus accuracy / micro-F1 / macro-F1.
std::pair<Tensor, Metrics> loss_and_metrics(Tape& tape, const Tensor& logits,
                                            std::span<const int> labels,
                                            std::span<const NodeId> mask);

Metrics evaluate_metrics(const Tensor& logits, std::span<const int> labels,
                         std::span<const NodeId> mask);

struct TrainState {
    AdamState adam;
    Index epoch = 0;
    Index best_epoch = -1;
    double best_val_macro = -1.0;
    Rng rng;

    TrainState() : rng(0) {}
};

struct EpochRow {
    Index epoch = 0;
    double train_loss = 0.0;
    double val_accuracy = 0.0;
    double val_micro_f1 = 0.0;
    double val_macro_f1 = 0.0;
};

struct TrainResult {
    std::vector<EpochRow> rows;
    Metrics test;
    Index best_epoch = -1;
    double best_val_macro = -1.0;
    std::string best_checkpoint;   // serialized bytes
    std::string final_checkpoint;  // serialized bytes
};

/// Seeded parameter init plus a fresh optimizer state; the returned rng
/// continues the init stream so resumed runs stay bit-identical.
std::pair<HgmnModel, TrainState> build_model_and_state(const ModelConfig& cfg,
                                                       const HeteroGraph& g);

/// Full-batch training for config.num_epochs steps (continuing from
/// state.epoch). The model is left holding the best-validation parameters.
TrainResult train(HgmnModel& model, TrainState& state, const HeteroGraph& g,
                  const PipelinePlan& plan, std::ostream* log = nullptr);

struct GradCheckGroup {
    std::string name;
    double max_rel_err = 0.0;
    Index coords_checked = 0;
};

struct GradCheckReport {
    std::vector<GradCheckGroup> groups;
    double max_rel_err = 0.0;
};

/// Central finite differences of the training loss against tape gradients,
/// on up to `max_coords` seeded coordinates per parameter tensor. Relative
/// error uses max(|fd|, |grad|, 1e-8) as denominator.
GradCheckReport gradient_check(HgmnModel& model, const HeteroGraph& g, const PipelinePlan& plan,
                               double epsilon, Index max_coords = 25);

// ---- checkpoint io ----------------------------------------------------------

std::string serialize_checkpoint(const HgmnModel& model, const TrainState& state);
/// Restores parameters and optimizer/rng state into a model built from the
/// same config and graph.
void load_checkpoint(const std::string& bytes, HgmnModel& model, TrainState& state);
/// Reads just the config echo from a serialized checkpoint.
ModelConfig checkpoint_config(const std::string& bytes);

}  // namespace hgmn
