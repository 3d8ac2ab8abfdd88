#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <map>

#include "hgmn/model.hpp"
#include "hgmn/synthetic.hpp"
#include "oracles.hpp"

using namespace hgmn;

namespace {

ModelConfig tiny_config(std::uint64_t seed = 1) {
    ModelConfig cfg;
    cfg.hidden_dim = 8;
    cfg.num_heads = 2;
    cfg.metapath_attention_dim = 6;
    cfg.num_layers = 1;
    cfg.num_epochs = 4;
    cfg.ssm_state_size = 3;
    cfg.seed = seed;
    return cfg;
}

// context degrees straddle the item degrees so the causal global scan mixes
// the two types in both directions
SyntheticSpec small_spec(std::uint64_t seed = 3) {
    SyntheticSpec spec;
    spec.items = 8;
    spec.contexts = 12;
    spec.num_classes = 3;
    spec.signal = 0.8;
    spec.item_edges = 2;
    spec.context_edges = 1;
    spec.item_feature_dim = 4;
    spec.context_feature_dim = 4;
    spec.seed = seed;
    return spec;
}

void zero_ssm_blocks(HgmnModel& model) {
    for (auto& [name, p] : model.named_parameters())
        if (name.rfind("layers.", 0) == 0) p.value_flat().setZero();
}

}  // namespace

TEST_CASE("forward produces finite logits of shape n x classes") {
    HeteroGraph g = load_graph(gen_synthetic(small_spec()));
    ModelConfig cfg = tiny_config();
    PipelinePlan plan = build_plan(g, cfg);
    auto [model, state] = build_model_and_state(cfg, g);
    Tape tape;
    Tensor logits = forward(tape, model, g, plan);
    CHECK(logits.rows() == g.num_nodes());
    CHECK(logits.cols() == 3);
    logits.check_finite("logits");
}

TEST_CASE("zeroed scan blocks reduce the pipeline to head(align(tokens))") {
    HeteroGraph g = load_graph(gen_synthetic(small_spec()));
    ModelConfig cfg = tiny_config();
    PipelinePlan plan = build_plan(g, cfg);
    auto [model, state] = build_model_and_state(cfg, g);
    zero_ssm_blocks(model);

    Tape tape;
    Tensor logits = forward(tape, model, g, plan);

    Tape tape2;
    Tensor projected = project_all(tape2, model.alignment.projector, g);
    AlignmentContext ctx = prepare_alignment(tape2, model.alignment);
    std::vector<Tensor> aligned;
    for (NodeId v = 0; v < g.num_nodes(); ++v)
        aligned.push_back(align_token(tape2, model.alignment, ctx, projected,
                                      plan.tokens[static_cast<std::size_t>(v)]));
    Tensor manual =
        add(tape2, matmul(tape2, stack_rows(tape2, aligned), model.head_w), model.head_b);

    REQUIRE(logits.numel() == manual.numel());
    for (Index i = 0; i < logits.numel(); ++i)
        CHECK(logits.value_flat()[i] == manual.value_flat()[i]);
}

TEST_CASE("single-node graph degenerates without error") {
    HeteroGraph g = load_graph(R"({
      "node_types": [{"name":"a","feature_dim":2}],
      "nodes": [{"id":0,"type":"a","features":[0.5,-0.5],"label":0}],
      "splits": {"train":[0],"val":[],"test":[]}})");
    ModelConfig cfg = tiny_config();
    PipelinePlan plan = build_plan(g, cfg);
    auto [model, state] = build_model_and_state(cfg, g);
    Tape tape;
    Tensor logits = forward(tape, model, g, plan);
    CHECK(logits.rows() == 1);
    logits.check_finite("logits");
}

TEST_CASE("model/graph mismatch is rejected") {
    HeteroGraph g = load_graph(gen_synthetic(small_spec()));
    HeteroGraph other = load_graph(oracles::reference_graph_doc());
    ModelConfig cfg = tiny_config();
    PipelinePlan plan = build_plan(g, cfg);
    auto [model, state] = build_model_and_state(cfg, g);
    PipelinePlan other_plan = build_plan(other, cfg);
    Tape tape;
    CHECK_THROWS_AS(forward(tape, model, other, other_plan), ContractError);
}

TEST_CASE("loss closed forms") {
    Tape tape;
    std::vector<int> labels{0, 1, 2, 1};
    std::vector<NodeId> mask{0, 1, 2, 3};
    {
        Tensor logits = Tensor::zeros({4, 3});
        auto [loss, m] = loss_and_metrics(tape, logits, labels, mask);
        CHECK(loss.item() == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    }
    {
        Tensor logits = Tensor::zeros({4, 3});
        for (Index r = 0; r < 4; ++r)
            logits.value_flat()[r * 3 + labels[static_cast<std::size_t>(r)]] = 30.0;
        auto [loss, m] = loss_and_metrics(tape, logits, labels, mask);
        CHECK(loss.item() <= 1e-9);
        CHECK(m.accuracy == 1.0);
        CHECK(m.macro_f1 == 1.0);
    }
    CHECK_THROWS_AS(loss_and_metrics(tape, Tensor::zeros({4, 3}), labels,
                                     std::vector<NodeId>{}),
                    ContractError);
}

TEST_CASE("micro-F1 equals accuracy; both match a confusion-matrix oracle") {
    Rng rng(71);
    const Index n = 200, c = 4;
    Tensor logits = Tensor::zeros({n, c});
    std::vector<int> labels;
    std::vector<NodeId> mask;
    for (Index v = 0; v < n; ++v) {
        labels.push_back(static_cast<int>(rng.below(c)));
        mask.push_back(v);
        for (Index j = 0; j < c; ++j)
            logits.value_flat()[v * c + j] = rng.uniform(-2.0, 2.0);
    }
    Metrics m = evaluate_metrics(logits, labels, mask);
    CHECK(std::abs(m.micro_f1 - m.accuracy) <= 1e-12);

    // independent confusion-matrix tally
    std::map<std::pair<int, int>, int> confusion;
    ConstMatMap lm(logits.value_flat().data(), n, c);
    for (Index v = 0; v < n; ++v) {
        Index pred;
        lm.row(v).maxCoeff(&pred);
        confusion[{labels[static_cast<std::size_t>(v)], static_cast<int>(pred)}] += 1;
    }
    double correct = 0;
    for (int k = 0; k < c; ++k) correct += confusion[{k, k}];
    CHECK(m.accuracy == doctest::Approx(correct / static_cast<double>(n)).epsilon(1e-14));
    double macro = 0.0;
    for (int k = 0; k < c; ++k) {
        double tp = confusion[{k, k}], fp = 0, fn = 0;
        for (int j = 0; j < c; ++j) {
            if (j != k) {
                fp += confusion[{j, k}];
                fn += confusion[{k, j}];
            }
        }
        const double denom = 2 * tp + fp + fn;
        macro += denom > 0 ? 2 * tp / denom : 0.0;
    }
    CHECK(m.macro_f1 == doctest::Approx(macro / c).epsilon(1e-14));
}

TEST_CASE("zero learning rate is a fixed point of training") {
    HeteroGraph g = load_graph(gen_synthetic(small_spec()));
    ModelConfig cfg = tiny_config();
    cfg.learning_rate = 0.0;
    cfg.weight_decay = 0.0;
    cfg.num_epochs = 3;
    PipelinePlan plan = build_plan(g, cfg);
    auto [model, state] = build_model_and_state(cfg, g);
    std::vector<Array> before;
    for (const Tensor& p : model.parameters()) before.push_back(p.value_flat());
    train(model, state, g, plan);
    auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i)
        for (Index j = 0; j < params[i].numel(); ++j)
            CHECK(params[i].value_flat()[j] == before[i][j]);
}

TEST_CASE("identically seeded runs produce identical curves and checkpoints") {
    auto run = []() {
        HeteroGraph g = load_graph(gen_synthetic(small_spec()));
        ModelConfig cfg = tiny_config(5);
        PipelinePlan plan = build_plan(g, cfg);
        auto [model, state] = build_model_and_state(cfg, g);
        return train(model, state, g, plan);
    };
    TrainResult a = run();
    TrainResult b = run();
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].train_loss == b.rows[i].train_loss);
        CHECK(a.rows[i].val_macro_f1 == b.rows[i].val_macro_f1);
    }
    CHECK(a.best_checkpoint == b.best_checkpoint);
    CHECK(a.final_checkpoint == b.final_checkpoint);
}

TEST_CASE("checkpoint round-trip and bitwise resume") {
    HeteroGraph g = load_graph(gen_synthetic(small_spec()));
    ModelConfig full_cfg = tiny_config(9);
    full_cfg.num_epochs = 6;
    PipelinePlan plan = build_plan(g, full_cfg);

    auto [model_a, state_a] = build_model_and_state(full_cfg, g);
    TrainResult straight = train(model_a, state_a, g, plan);

    ModelConfig half_cfg = full_cfg;
    half_cfg.num_epochs = 3;
    auto [model_b, state_b] = build_model_and_state(half_cfg, g);
    TrainResult phase1 = train(model_b, state_b, g, plan);

    auto [model_c, state_c] = build_model_and_state(full_cfg, g);
    load_checkpoint(phase1.final_checkpoint, model_c, state_c);
    CHECK(state_c.epoch == 3);
    TrainResult phase2 = train(model_c, state_c, g, plan);

    REQUIRE(phase2.rows.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(phase2.rows[i].train_loss == straight.rows[i + 3].train_loss);
        CHECK(phase2.rows[i].val_macro_f1 == straight.rows[i + 3].val_macro_f1);
    }
    CHECK(phase2.final_checkpoint == straight.final_checkpoint);

    // loading a checkpoint into a mismatched config is rejected
    ModelConfig other = full_cfg;
    other.hidden_dim = 16;
    auto [model_d, state_d] = build_model_and_state(other, g);
    CHECK_THROWS_AS(load_checkpoint(phase1.final_checkpoint, model_d, state_d),
                    ContractError);
}

TEST_CASE("every parameter tensor receives gradient on a generic input") {
    // the fixture interleaves both node types in the global order, so every
    // block sits on a live path to the loss
    HeteroGraph g = load_graph_file(std::string(HGMN_FIXTURES) + "/grad12.json");
    ModelConfig cfg = tiny_config(11);
    PipelinePlan plan = build_plan(g, cfg);
    auto [model, state] = build_model_and_state(cfg, g);
    Tape tape;
    Tensor logits = forward(tape, model, g, plan);
    std::vector<Index> rows(g.splits.train.begin(), g.splits.train.end());
    Tensor loss = cross_entropy_mean(tape, logits, g.labels, rows);
    tape.backward(loss);
    for (auto& [name, p] : model.named_parameters()) {
        INFO(name);
        CHECK(p.grad_flat().abs().maxCoeff() > 0.0);
    }
}

TEST_CASE("ordering ablations change nothing once scan blocks are zeroed") {
    HeteroGraph g = load_graph(gen_synthetic(small_spec()));
    ModelConfig base = tiny_config(13);
    ModelConfig ablated = base;
    ablated.inner_order_mode = "random";
    ablated.outer_order_mode = "random";

    PipelinePlan plan_base = build_plan(g, base);
    PipelinePlan plan_ablated = build_plan(g, ablated);
    auto [model_a, st_a] = build_model_and_state(base, g);
    auto [model_b, st_b] = build_model_and_state(ablated, g);
    zero_ssm_blocks(model_a);
    zero_ssm_blocks(model_b);

    Tape ta, tb;
    Tensor la = forward(ta, model_a, g, plan_base);
    Tensor lb = forward(tb, model_b, g, plan_ablated);
    for (Index i = 0; i < la.numel(); ++i)
        CHECK(la.value_flat()[i] == lb.value_flat()[i]);
}

TEST_CASE("relabeling nodes permutes the logits on distinct-key graphs") {
    HeteroGraph g = load_graph(oracles::distinct_key_graph_doc());
    ModelConfig cfg = tiny_config(17);

    OrderedGroups groups = inner_order(g, g.metapaths, InnerOrderMode::Count);
    CHECK(groups.keys[0] == std::vector<Index>{0, 1, 2, 3, 4});
    GlobalOrder go = outer_order(g, OuterOrderMode::Degree);
    CHECK(go.keys == std::vector<Index>{0, 1, 2, 3, 4});

    const Index n = g.num_nodes();
    auto pi = [n](NodeId v) { return n - 1 - v; };
    HeteroGraph gp = load_graph(oracles::permuted_document(g, pi));

    PipelinePlan plan = build_plan(g, cfg);
    PipelinePlan plan_p = build_plan(gp, cfg);
    auto [model, st] = build_model_and_state(cfg, g);
    auto [model_p, st_p] = build_model_and_state(cfg, gp);

    Tape t1, t2;
    Tensor l1 = forward(t1, model, g, plan);
    Tensor l2 = forward(t2, model_p, gp, plan_p);
    const Index c = l1.cols();
    for (NodeId v = 0; v < n; ++v)
        for (Index j = 0; j < c; ++j)
            CHECK(std::abs(l1.value_flat()[v * c + j] -
                           l2.value_flat()[pi(v) * c + j]) <= 1e-9);
}

TEST_CASE("gradient check report stays under tolerance on the fixture") {
    HeteroGraph g = load_graph_file(std::string(HGMN_FIXTURES) + "/grad12.json");
    ModelConfig cfg =
        parse_config_file(std::string(HGMN_FIXTURES) + "/grad12.config");
    PipelinePlan plan = build_plan(g, cfg);
    auto [model, state] = build_model_and_state(cfg, g);
    GradCheckReport report = gradient_check(model, g, plan, 1e-5, /*max_coords=*/6);
    for (const auto& group : report.groups) {
        INFO(group.name);
        CHECK(group.max_rel_err <= 1e-4);
    }

    // guarded denominator: zeroing the head disconnects everything upstream,
    // and the checks stay finite (and exactly zero)
    for (auto& [name, p] : model.named_parameters())
        if (name.rfind("head.", 0) == 0) p.value_flat().setZero();
    GradCheckReport zero_head = gradient_check(model, g, plan, 1e-5, 2);
    for (const auto& group : zero_head.groups) {
        CHECK(std::isfinite(group.max_rel_err));
        if (group.name.rfind("head.", 0) != 0) CHECK(group.max_rel_err == 0.0);
    }

    // doubling the step changes reported errors consistently with a
    // second-order method once truncation dominates
    GradCheckReport coarse = gradient_check(model, g, plan, 2e-3, 6);
    GradCheckReport fine = gradient_check(model, g, plan, 1e-3, 6);
    double worst_ratio = 0.0;
    for (std::size_t i = 0; i < coarse.groups.size(); ++i) {
        if (fine.groups[i].max_rel_err < 1e-7) continue;  // noise floor
        worst_ratio = std::max(worst_ratio,
                               coarse.groups[i].max_rel_err / fine.groups[i].max_rel_err);
    }
    CHECK(worst_ratio <= 8.0);  // ~4x expected for O(eps^2)
    CHECK(worst_ratio > 0.0);
}

TEST_CASE("config text round-trips through the parser") {
    ModelConfig cfg = tiny_config(31);
    cfg.learning_rate = 7.25e-4;
    cfg.instance_encoder = "linear";
    cfg.zoh_exact = false;
    ModelConfig back = parse_config_text(cfg.canonical_text());
    CHECK(back.canonical_text() == cfg.canonical_text());

    CHECK_THROWS_AS(parse_config_text("nonsense_key = 3\n"), ValidationError);
    CHECK_THROWS_AS(parse_config_text("hidden_dim = banana\n"), ValidationError);
    CHECK_THROWS_AS(parse_config_text("hidden_dim = 7\nnum_heads = 2\n"),
                    ValidationError);  // not divisible
    // comments and blank lines are tolerated
    ModelConfig ok = parse_config_text("# preset\nhidden_dim = 8\nnum_heads = 2\n\n");
    CHECK(ok.hidden_dim == 8);
}

TEST_CASE("non-finite loss aborts with an epoch diagnostic") {
    HeteroGraph g = load_graph(gen_synthetic(small_spec()));
    ModelConfig cfg = tiny_config(37);
    PipelinePlan plan = build_plan(g, cfg);
    auto [model, state] = build_model_and_state(cfg, g);
    // corrupt one head coordinate; the loss turns non-finite immediately
    model.head_w.value_flat()[0] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_WITH_AS(train(model, state, g, plan), doctest::Contains("epoch 1"),
                         NumericError);
}

TEST_CASE("training learns a separable synthetic task") {
    SyntheticSpec spec;
    spec.items = 60;
    spec.contexts = 15;
    spec.signal = 1.0;
    spec.item_edges = 2;
    spec.context_edges = 1;
    spec.item_feature_dim = 4;
    spec.context_feature_dim = 4;
    spec.seed = 2;
    HeteroGraph g = load_graph(gen_synthetic(spec));
    ModelConfig cfg = tiny_config(23);
    cfg.hidden_dim = 16;
    cfg.num_heads = 4;
    cfg.num_epochs = 40;
    cfg.learning_rate = 5e-3;
    PipelinePlan plan = build_plan(g, cfg);
    auto [model, state] = build_model_and_state(cfg, g);
    TrainResult result = train(model, state, g, plan);
    CHECK(result.best_val_macro >= 0.9);
    CHECK(result.rows.front().train_loss > result.rows.back().train_loss);
}
