#include "hgmn/model.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <set>

namespace hgmn {

// ---- config -----------------------------------------------------------------

ModelConfig ModelConfig::large_preset() {
    ModelConfig c;
    c.num_layers = 4;
    c.hidden_dim = 128;
    c.learning_rate = 3e-3;
    c.weight_decay = 5e-4;
    c.num_epochs = 300;
    c.metapath_attention_dim = 256;
    return c;
}

void ModelConfig::validate() const {
    if (hidden_dim <= 0 || num_layers <= 0 || num_heads <= 0 || metapath_attention_dim <= 0)
        throw ContractError("config: dimensions must be positive");
    if (hidden_dim % num_heads != 0)
        throw ContractError("config: hidden_dim must be divisible by num_heads");
    if (num_epochs < 0 || learning_rate < 0.0 || weight_decay < 0.0)
        throw ContractError("config: negative training hyperparameter");
    if (inner_order_mode != "count" && inner_order_mode != "random")
        throw ContractError("config: inner_order_mode must be count|random");
    if (outer_order_mode != "degree" && outer_order_mode != "random")
        throw ContractError("config: outer_order_mode must be degree|random");
    if (instance_encoder != "mean" && instance_encoder != "linear")
        throw ContractError("config: instance_encoder must be mean|linear");
    if (max_instances_per_node <= 0)
        throw ContractError("config: max_instances_per_node must be positive");
    if (ssm_state_size <= 0 || ssm_expansion <= 0 || ssm_conv_width <= 0)
        throw ContractError("config: ssm dimensions must be positive");
}

EnumOptions ModelConfig::enum_options() const {
    return EnumOptions{max_instances_per_node, simple_paths_only};
}

InnerOrderMode ModelConfig::inner_mode() const {
    return inner_order_mode == "count" ? InnerOrderMode::Count : InnerOrderMode::Random;
}

OuterOrderMode ModelConfig::outer_mode() const {
    return outer_order_mode == "degree" ? OuterOrderMode::Degree : OuterOrderMode::Random;
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string ModelConfig::canonical_text() const {
    std::string s;
    auto line = [&s](const std::string& k, const std::string& v) { s += k + " = " + v + "\n"; };
    line("hidden_dim", std::to_string(hidden_dim));
    line("num_layers", std::to_string(num_layers));
    line("num_heads", std::to_string(num_heads));
    line("metapath_attention_dim", std::to_string(metapath_attention_dim));
    line("learning_rate", fmt_double(learning_rate));
    line("weight_decay", fmt_double(weight_decay));
    line("num_epochs", std::to_string(num_epochs));
    line("inner_order_mode", inner_order_mode);
    line("outer_order_mode", outer_order_mode);
    line("instance_encoder", instance_encoder);
    line("zoh_exact", zoh_exact ? "true" : "false");
    line("max_instances_per_node", std::to_string(max_instances_per_node));
    line("simple_paths_only", simple_paths_only ? "true" : "false");
    line("seed", std::to_string(seed));
    line("ssm_state_size", std::to_string(ssm_state_size));
    line("ssm_expansion", std::to_string(ssm_expansion));
    line("ssm_conv_width", std::to_string(ssm_conv_width));
    return s;
}

// ---- plan ---------------------------------------------------------------

PipelinePlan build_plan(const HeteroGraph& g, const ModelConfig& cfg) {
    PipelinePlan plan;
    const EnumOptions opts = cfg.enum_options();
    plan.tokens.reserve(static_cast<std::size_t>(g.num_nodes()));
    for (NodeId v = 0; v < g.num_nodes(); ++v)
        plan.tokens.push_back(build_token(g, g.metapaths, v, opts));
    plan.inner = inner_order(g, g.metapaths, cfg.inner_mode(), cfg.seed, opts);
    plan.outer = outer_order(g, cfg.outer_mode(), cfg.seed);
    return plan;
}

// ---- model ------------------------------------------------------------------

HgmnModel HgmnModel::create(const ModelConfig& cfg, const HeteroGraph& g, Rng& rng) {
    cfg.validate();
    HgmnModel m;
    m.config = cfg;
    m.num_classes = std::max(1, g.num_classes());
    m.num_metapaths = static_cast<Index>(g.metapaths.size());
    for (const auto& nt : g.node_types) {
        m.type_feature_dims.push_back(nt.feature_dim);
        m.type_names.push_back(nt.name);
    }
    for (const auto& mp : g.metapaths) m.metapath_names.push_back(mp.name);

    const Index d = cfg.hidden_dim;
    auto uniform_init = [&rng](std::vector<Index> shape, double fan_in) {
        Tensor t = Tensor::zeros(std::move(shape), true);
        const double bound = 1.0 / std::sqrt(fan_in);
        for (Index i = 0; i < t.numel(); ++i) t.value_flat()[i] = rng.uniform(-bound, bound);
        return t;
    };

    m.alignment.hidden_dim = d;
    m.alignment.num_heads = cfg.num_heads;
    for (Index dt : m.type_feature_dims) {
        m.alignment.projector.weight.push_back(uniform_init({dt, d}, static_cast<double>(dt)));
        m.alignment.projector.bias.push_back(uniform_init({d}, static_cast<double>(dt)));
    }
    if (cfg.instance_encoder == "linear") {
        LinearInstanceEncoder enc;
        enc.weight = uniform_init({d, d}, static_cast<double>(d));
        enc.bias = uniform_init({d}, static_cast<double>(d));
        m.alignment.linear_encoder = enc;
    }
    for (Index k = 0; k < m.num_metapaths; ++k)
        m.alignment.instance_attention.push_back(
            uniform_init({2 * d}, static_cast<double>(2 * d)));
    m.alignment.semantic.weight =
        uniform_init({d, cfg.metapath_attention_dim}, static_cast<double>(d));
    m.alignment.semantic.bias = uniform_init({cfg.metapath_attention_dim},
                                             static_cast<double>(d));
    m.alignment.semantic.query = uniform_init({cfg.metapath_attention_dim, 1},
                                              static_cast<double>(cfg.metapath_attention_dim));

    for (Index l = 0; l < cfg.num_layers; ++l) {
        Layer layer;
        for (std::size_t t = 0; t < m.type_names.size(); ++t)
            layer.inner.push_back(SelectiveSsmBlock::create(
                d, cfg.ssm_state_size, cfg.ssm_expansion, cfg.ssm_conv_width, cfg.zoh_exact,
                rng));
        layer.outer = SelectiveSsmBlock::create(d, cfg.ssm_state_size, cfg.ssm_expansion,
                                                cfg.ssm_conv_width, cfg.zoh_exact, rng);
        m.layers.push_back(std::move(layer));
    }
    m.head_w = uniform_init({d, m.num_classes}, static_cast<double>(d));
    m.head_b = uniform_init({m.num_classes}, static_cast<double>(d));
    return m;
}

std::vector<std::pair<std::string, Tensor>> HgmnModel::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t t = 0; t < type_names.size(); ++t) {
        out.emplace_back("proj." + type_names[t] + ".w", alignment.projector.weight[t]);
        out.emplace_back("proj." + type_names[t] + ".b", alignment.projector.bias[t]);
    }
    if (alignment.linear_encoder) {
        out.emplace_back("inst_encoder.w", alignment.linear_encoder->weight);
        out.emplace_back("inst_encoder.b", alignment.linear_encoder->bias);
    }
    for (std::size_t k = 0; k < metapath_names.size(); ++k)
        out.emplace_back("inst_att." + metapath_names[k], alignment.instance_attention[k]);
    out.emplace_back("sem.w", alignment.semantic.weight);
    out.emplace_back("sem.b", alignment.semantic.bias);
    out.emplace_back("sem.q", alignment.semantic.query);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        for (std::size_t t = 0; t < type_names.size(); ++t) {
            const auto names = layers[l].inner[t].parameter_names();
            const auto params = layers[l].inner[t].parameters();
            for (std::size_t i = 0; i < names.size(); ++i)
                out.emplace_back("layers." + std::to_string(l) + ".inner." + type_names[t] +
                                     "." + names[i],
                                 params[i]);
        }
        const auto names = layers[l].outer.parameter_names();
        const auto params = layers[l].outer.parameters();
        for (std::size_t i = 0; i < names.size(); ++i)
            out.emplace_back("layers." + std::to_string(l) + ".outer." + names[i], params[i]);
    }
    out.emplace_back("head.w", head_w);
    out.emplace_back("head.b", head_b);
    return out;
}

std::vector<Tensor> HgmnModel::parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
}

std::vector<std::string> HgmnModel::parameter_names() const {
    std::vector<std::string> out;
    for (auto& [name, t] : named_parameters()) out.push_back(name);
    return out;
}

void HgmnModel::check_graph(const HeteroGraph& g) const {
    if (g.num_node_types() != static_cast<Index>(type_feature_dims.size()))
        throw ContractError("model/graph mismatch: node type counts differ");
    for (std::size_t t = 0; t < type_feature_dims.size(); ++t) {
        if (g.node_types[t].feature_dim != type_feature_dims[t] ||
            g.node_types[t].name != type_names[t])
            throw ContractError("model/graph mismatch at node type '" + g.node_types[t].name +
                                "'");
    }
    if (static_cast<Index>(g.metapaths.size()) != num_metapaths)
        throw ContractError("model/graph mismatch: metapath counts differ");
}

// ---- forward ------------------------------------------------------------

Tensor forward(Tape& tape, const HgmnModel& model, const HeteroGraph& g,
               const PipelinePlan& plan) {
    model.check_graph(g);
    if (static_cast<Index>(plan.tokens.size()) != g.num_nodes())
        throw ContractError("forward: plan does not cover the graph");
    const Index n = g.num_nodes();

    Tensor projected = project_all(tape, model.alignment.projector, g);
    AlignmentContext ctx = prepare_alignment(tape, model.alignment);
    std::vector<Tensor> aligned;
    aligned.reserve(static_cast<std::size_t>(n));
    for (NodeId v = 0; v < n; ++v)
        aligned.push_back(
            align_token(tape, model.alignment, ctx, projected, plan.tokens[static_cast<std::size_t>(v)]));
    Tensor h = stack_rows(tape, aligned);

    for (const auto& layer : model.layers) {
        Tensor next;
        for (std::size_t t = 0; t < layer.inner.size(); ++t) {
            const auto& ids = plan.inner.order[t];
            if (ids.empty()) continue;
            Tensor seq = apply_order(tape, h, ids);
            Tensor y = selective_scan(tape, layer.inner[t], seq);
            Tensor placed = scatter_back(tape, y, ids, n);
            next = next.defined() ? add(tape, next, placed) : placed;
        }
        h = next;
        Tensor seq = apply_order(tape, h, plan.outer.order);
        Tensor y = selective_scan(tape, layer.outer, seq);
        h = scatter_back(tape, y, plan.outer.order, n);
    }
    return add(tape, matmul(tape, h, model.head_w), model.head_b);
}

// ---- loss & metrics -------------------------------------------------------

Metrics evaluate_metrics(const Tensor& logits, std::span<const int> labels,
                         std::span<const NodeId> mask) {
    if (mask.empty()) throw ContractError("evaluate_metrics: empty mask");
    const Index c = logits.cols();
    ConstMatMap lv(logits.value_flat().data(), logits.rows(), c);
    std::vector<Index> tp(static_cast<std::size_t>(c), 0), fp(static_cast<std::size_t>(c), 0),
        fn(static_cast<std::size_t>(c), 0);
    Index correct = 0;
    for (NodeId v : mask) {
        const int truth = labels[static_cast<std::size_t>(v)];
        if (truth < 0 || truth >= c)
            throw ContractError("evaluate_metrics: node " + std::to_string(v) +
                                " has no valid label");
        Index pred = 0;
        lv.row(v).maxCoeff(&pred);
        if (pred == truth) {
            correct += 1;
            tp[static_cast<std::size_t>(truth)] += 1;
        } else {
            fp[static_cast<std::size_t>(pred)] += 1;
            fn[static_cast<std::size_t>(truth)] += 1;
        }
    }
    Metrics m;
    const double total = static_cast<double>(mask.size());
    m.accuracy = static_cast<double>(correct) / total;
    Index tp_sum = 0, fp_sum = 0, fn_sum = 0;
    double macro = 0.0;
    for (Index k = 0; k < c; ++k) {
        tp_sum += tp[static_cast<std::size_t>(k)];
        fp_sum += fp[static_cast<std::size_t>(k)];
        fn_sum += fn[static_cast<std::size_t>(k)];
        const double denom = static_cast<double>(2 * tp[static_cast<std::size_t>(k)] +
                                                 fp[static_cast<std::size_t>(k)] +
                                                 fn[static_cast<std::size_t>(k)]);
        macro += denom > 0.0
                     ? 2.0 * static_cast<double>(tp[static_cast<std::size_t>(k)]) / denom
                     : 0.0;
    }
    m.macro_f1 = macro / static_cast<double>(c);
    const double micro_denom = static_cast<double>(2 * tp_sum + fp_sum + fn_sum);
    m.micro_f1 = micro_denom > 0.0 ? 2.0 * static_cast<double>(tp_sum) / micro_denom : 0.0;
    return m;
}

std::pair<Tensor, Metrics> loss_and_metrics(Tape& tape, const Tensor& logits,
                                            std::span<const int> labels,
                                            std::span<const NodeId> mask) {
    if (mask.empty()) throw ContractError("loss_and_metrics: empty mask");
    std::vector<Index> rows(mask.begin(), mask.end());
    Tensor loss = cross_entropy_mean(tape, logits, labels, rows);
    Metrics m = evaluate_metrics(logits, labels, mask);
    m.loss = loss.item();
    return {loss, m};
}

// ---- train ------------------------------------------------------------------

namespace {

void check_splits(const HeteroGraph& g) {
    if (g.splits.train.empty()) throw ContractError("train: empty train split");
    std::set<NodeId> seen;
    for (const auto* split : {&g.splits.train, &g.splits.val, &g.splits.test})
        for (NodeId v : *split)
            if (!seen.insert(v).second)
                throw ContractError("train: splits are not disjoint at node " +
                                    std::to_string(v));
}

}  // namespace

std::pair<HgmnModel, TrainState> build_model_and_state(const ModelConfig& cfg,
                                                       const HeteroGraph& g) {
    Rng rng(cfg.seed);
    HgmnModel model = HgmnModel::create(cfg, g, rng);
    TrainState state;
    state.adam = AdamState(model.parameters(), cfg.learning_rate, cfg.weight_decay);
    state.rng = rng;
    return {std::move(model), std::move(state)};
}

TrainResult train(HgmnModel& model, TrainState& state, const HeteroGraph& g,
                  const PipelinePlan& plan, std::ostream* log) {
    check_splits(g);
    TrainResult result;
    std::vector<Tensor> params = model.parameters();
    std::vector<std::string> names = model.parameter_names();

    std::vector<Array> best_values;
    const bool has_val = !g.splits.val.empty();

    for (Index epoch = state.epoch + 1; epoch <= model.config.num_epochs; ++epoch) {
        Tape tape;
        Tensor logits = forward(tape, model, g, plan);
        std::vector<Index> rows(g.splits.train.begin(), g.splits.train.end());
        Tensor loss = cross_entropy_mean(tape, logits, g.labels, rows);
        const double train_loss = loss.item();
        if (!std::isfinite(train_loss)) {
            std::string worst = "(unavailable)";
            try {
                tape.backward(loss);
                double worst_norm = -1.0;
                for (std::size_t i = 0; i < params.size(); ++i) {
                    const double norm = params[i].grad_flat().abs().maxCoeff();
                    if (std::isnan(norm) || norm > worst_norm) {
                        worst_norm = norm;
                        worst = names[i];
                        if (std::isnan(norm)) break;
                    }
                }
            } catch (const std::exception&) {
            }
            throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                               "; largest gradient magnitude in " + worst);
        }
        tape.backward(loss);
        tape.clear();
        adam_step(params, state.adam, names);
        state.epoch = epoch;

        Metrics val;
        if (has_val) {
            Tape eval_tape;
            Tensor eval_logits = forward(eval_tape, model, g, plan);
            val = evaluate_metrics(eval_logits, g.labels, g.splits.val);
            eval_tape.clear();
        }
        result.rows.push_back(
            EpochRow{epoch, train_loss, val.accuracy, val.micro_f1, val.macro_f1});
        if (log) {
            char buf[160];
            std::snprintf(buf, sizeof(buf),
                          "epoch %3" PRId64 "  train_loss %.6f  val_acc %.4f  val_macro_f1 %.4f",
                          static_cast<std::int64_t>(epoch), train_loss, val.accuracy,
                          val.macro_f1);
            (*log) << buf << "\n";
        }
        if (has_val && val.macro_f1 > state.best_val_macro) {
            state.best_val_macro = val.macro_f1;
            state.best_epoch = epoch;
            result.best_checkpoint = serialize_checkpoint(model, state);
            best_values.clear();
            for (const Tensor& p : params) best_values.push_back(p.value_flat());
        }
    }

    result.final_checkpoint = serialize_checkpoint(model, state);
    result.best_epoch = state.best_epoch;
    result.best_val_macro = state.best_val_macro;
    if (result.best_checkpoint.empty()) result.best_checkpoint = result.final_checkpoint;

    if (!best_values.empty())
        for (std::size_t i = 0; i < params.size(); ++i)
            params[i].value_flat() = best_values[i];
    if (!g.splits.test.empty()) {
        Tape tape;
        Tensor logits = forward(tape, model, g, plan);
        auto [loss, metrics] =
            loss_and_metrics(tape, logits, g.labels, g.splits.test);
        result.test = metrics;
        tape.clear();
    }
    return result;
}

// ---- gradient check -----------------------------------------------------

GradCheckReport gradient_check(HgmnModel& model, const HeteroGraph& g, const PipelinePlan& plan,
                               double epsilon, Index max_coords) {
    check_splits(g);
    auto eval_loss = [&]() {
        Tape tape;
        Tensor logits = forward(tape, model, g, plan);
        std::vector<Index> rows(g.splits.train.begin(), g.splits.train.end());
        Tensor loss = cross_entropy_mean(tape, logits, g.labels, rows);
        const double v = loss.item();
        tape.clear();
        return v;
    };

    auto named = model.named_parameters();
    for (auto& [name, p] : named) p.zero_grad();
    {
        Tape tape;
        Tensor logits = forward(tape, model, g, plan);
        std::vector<Index> rows(g.splits.train.begin(), g.splits.train.end());
        Tensor loss = cross_entropy_mean(tape, logits, g.labels, rows);
        tape.backward(loss);
        tape.clear();
    }
    std::vector<Array> tape_grads;
    tape_grads.reserve(named.size());
    for (auto& [name, p] : named) tape_grads.push_back(p.grad_flat());

    Rng rng(model.config.seed ^ 0x67ad5c0fda1eb1e5ull);
    GradCheckReport report;
    for (std::size_t gi = 0; gi < named.size(); ++gi) {
        auto& [name, p] = named[gi];
        std::vector<Index> coords;
        if (p.numel() <= max_coords) {
            coords.resize(static_cast<std::size_t>(p.numel()));
            std::iota(coords.begin(), coords.end(), Index{0});
        } else {
            std::set<Index> picked;
            while (static_cast<Index>(picked.size()) < max_coords)
                picked.insert(static_cast<Index>(
                    rng.below(static_cast<std::uint64_t>(p.numel()))));
            coords.assign(picked.begin(), picked.end());
        }
        GradCheckGroup group;
        group.name = name;
        group.coords_checked = static_cast<Index>(coords.size());
        // group-level comparison: the finite-difference quantum ulp(L)/2eps
        // floors what any single near-zero coordinate can resolve, so the
        // group's error is measured against the group's gradient scale (the
        // tape gradient is known on the whole tensor)
        double diff = 0.0, fd_scale = 0.0;
        const double an_scale = tape_grads[gi].size() > 0 ? tape_grads[gi].abs().maxCoeff() : 0.0;
        for (Index c : coords) {
            const double saved = p.value_flat()[c];
            p.value_flat()[c] = saved + epsilon;
            const double lp = eval_loss();
            p.value_flat()[c] = saved - epsilon;
            const double lm = eval_loss();
            p.value_flat()[c] = saved;
            const double fd = (lp - lm) / (2.0 * epsilon);
            const double an = tape_grads[gi][c];
            diff = std::max(diff, std::abs(fd - an));
            fd_scale = std::max(fd_scale, std::abs(fd));
        }
        group.max_rel_err = diff / std::max({fd_scale, an_scale, 1e-8});
        report.max_rel_err = std::max(report.max_rel_err, group.max_rel_err);
        report.groups.push_back(std::move(group));
    }
    for (auto& [name, p] : named) p.zero_grad();
    return report;
}

}  // namespace hgmn
