#include <cstdio>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "hgmn/model.hpp"
#include "hgmn/report.hpp"
#include "hgmn/selfcheck.hpp"
#include "hgmn/synthetic.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumeric = 2;
constexpr int kExitUsage = 64;

int cmd_validate(const std::string& graph_path) {
    hgmn::HeteroGraph g = hgmn::load_graph_file(graph_path);
    std::cout << "ok: " << g.num_nodes() << " nodes, " << g.num_edge_types()
              << " edge types, " << g.metapaths.size() << " metapaths\n";
    return kExitOk;
}

int cmd_gen_synthetic(const std::string& spec_path, const std::string& out_dir) {
    const hgmn::SyntheticSpec spec = hgmn::SyntheticSpec::from_json(hgmn::read_file(spec_path));
    std::filesystem::create_directories(out_dir);
    const std::string path = out_dir + "/graph.json";
    hgmn::atomic_write_file(path, hgmn::gen_synthetic(spec));
    std::cout << path << "\n";
    return kExitOk;
}

int cmd_enumerate(const std::string& graph_path, const std::string& metapath,
                  std::int64_t node) {
    hgmn::HeteroGraph g = hgmn::load_graph_file(graph_path);
    const hgmn::MetapathSchema* schema = g.find_metapath(metapath);
    if (!schema) throw hgmn::ValidationError("unknown metapath '" + metapath + "'");
    int schema_index = 0;
    for (std::size_t i = 0; i < g.metapaths.size(); ++i)
        if (&g.metapaths[i] == schema) schema_index = static_cast<int>(i);
    if (node >= 0) {
        const auto instances = hgmn::enumerate_instances(g, *schema, schema_index, node);
        std::cout << instances.size() << "\n";
        for (const auto& inst : instances) {
            for (std::size_t i = 0; i < inst.nodes.size(); ++i)
                std::cout << (i ? " " : "") << inst.nodes[i];
            std::cout << "\n";
        }
    } else {
        for (hgmn::NodeId v : g.nodes_of_type(schema->node_types[0]))
            std::cout << v << " "
                      << hgmn::enumerate_instances(g, *schema, schema_index, v).size() << "\n";
    }
    return kExitOk;
}

int cmd_train(const std::string& graph_path, const std::string& config_path,
              const std::string& out_dir, bool no_inner, bool no_outer) {
    hgmn::HeteroGraph g = hgmn::load_graph_file(graph_path);
    hgmn::ModelConfig cfg = hgmn::parse_config_file(config_path);
    if (no_inner) cfg.inner_order_mode = "random";
    if (no_outer) cfg.outer_order_mode = "random";

    hgmn::PipelinePlan plan = hgmn::build_plan(g, cfg);
    auto [model, state] = hgmn::build_model_and_state(cfg, g);
    hgmn::TrainResult result = hgmn::train(model, state, g, plan, &std::cout);

    std::filesystem::create_directories(out_dir);
    hgmn::RunManifest manifest;
    manifest.build_id = hgmn::build_id();
    manifest.config_text = cfg.canonical_text();
    manifest.seed = cfg.seed;
    manifest.input_digests.emplace_back(graph_path, hgmn::file_digest_hex(graph_path));
    manifest.input_digests.emplace_back(config_path, hgmn::file_digest_hex(config_path));
    manifest.rows = result.rows;
    manifest.test = result.test;
    manifest.best_epoch = result.best_epoch;
    manifest.best_val_macro = result.best_val_macro;
    hgmn::atomic_write_file(out_dir + "/metrics.csv",
                            hgmn::metrics_csv(result.rows, result.test));
    hgmn::atomic_write_file(out_dir + "/manifest.json", hgmn::manifest_json(manifest));
    hgmn::atomic_write_file(out_dir + "/checkpoint_best.bin", result.best_checkpoint);
    hgmn::atomic_write_file(out_dir + "/checkpoint_final.bin", result.final_checkpoint);

    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "done: best epoch %lld val_macro_f1 %.4f | test acc %.4f macro_f1 %.4f",
                  static_cast<long long>(result.best_epoch), result.best_val_macro,
                  result.test.accuracy, result.test.macro_f1);
    std::cout << buf << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& graph_path, const std::string& checkpoint_path) {
    hgmn::HeteroGraph g = hgmn::load_graph_file(graph_path);
    const std::string bytes = hgmn::read_file(checkpoint_path);
    const hgmn::ModelConfig cfg = hgmn::checkpoint_config(bytes);
    auto [model, state] = hgmn::build_model_and_state(cfg, g);
    hgmn::load_checkpoint(bytes, model, state);
    hgmn::PipelinePlan plan = hgmn::build_plan(g, cfg);
    if (g.splits.test.empty()) throw hgmn::ValidationError("graph has no test split");

    hgmn::Tape tape;
    hgmn::Tensor logits = hgmn::forward(tape, model, g, plan);
    auto [loss, metrics] = hgmn::loss_and_metrics(tape, logits, g.labels, g.splits.test);
    tape.clear();

    nlohmann::json out{{"split", "test"},
                       {"loss", metrics.loss},
                       {"accuracy", metrics.accuracy},
                       {"micro_f1", metrics.micro_f1},
                       {"macro_f1", metrics.macro_f1}};
    std::cout << out.dump() << "\n";
    return kExitOk;
}

int cmd_gradcheck(const std::string& graph_path, const std::string& config_path) {
    hgmn::HeteroGraph g = hgmn::load_graph_file(graph_path);
    hgmn::ModelConfig cfg = hgmn::parse_config_file(config_path);
    hgmn::PipelinePlan plan = hgmn::build_plan(g, cfg);
    auto [model, state] = hgmn::build_model_and_state(cfg, g);
    const hgmn::GradCheckReport report = hgmn::gradient_check(model, g, plan, 1e-5);
    for (const auto& group : report.groups) {
        char buf[200];
        std::snprintf(buf, sizeof(buf), "%-40s max_rel_err %.3e (%lld coords)",
                      group.name.c_str(), group.max_rel_err,
                      static_cast<long long>(group.coords_checked));
        std::cout << buf << "\n";
    }
    std::printf("overall max_rel_err %.3e\n", report.max_rel_err);
    if (report.max_rel_err > 1e-4) {
        std::cout << "FAIL: gradient check exceeded 1e-4\n";
        return kExitNumeric;
    }
    std::cout << "PASS\n";
    return kExitOk;
}

int cmd_selftest() {
    bool all_pass = true;
    for (const auto& r : hgmn::run_kernel_selftests()) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "[%s] %-26s max_err %.3e (tol %.0e)",
                      r.pass ? "PASS" : "FAIL", r.name.c_str(), r.max_err, r.tolerance);
        std::cout << buf << "\n";
        all_pass = all_pass && r.pass;
    }
    return all_pass ? kExitOk : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"heterogeneous-graph selective state-space model toolkit"};
    app.require_subcommand(1);

    std::string graph_path, config_path, out_dir, spec_path, checkpoint_path, metapath;
    std::int64_t node = -1;
    bool no_inner = false, no_outer = false;

    auto* validate = app.add_subcommand("validate", "validate a graph document");
    validate->add_option("graph", graph_path)->required();

    auto* gen = app.add_subcommand("gen-synthetic", "generate a synthetic labeled graph");
    gen->add_option("--spec", spec_path)->required();
    gen->add_option("--out", out_dir)->required();

    auto* enumerate = app.add_subcommand("enumerate", "list metapath instance counts or walks");
    enumerate->add_option("graph", graph_path)->required();
    enumerate->add_option("--metapath", metapath)->required();
    enumerate->add_option("--node", node);

    auto* train = app.add_subcommand("train", "train on a graph document");
    train->add_option("graph", graph_path)->required();
    train->add_option("--config", config_path)->required();
    train->add_option("--out", out_dir)->required();
    train->add_flag("--no-inner-order", no_inner, "randomize the per-type ordering");
    train->add_flag("--no-outer-order", no_outer, "randomize the global ordering");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    eval->add_option("graph", graph_path)->required();
    eval->add_option("--checkpoint", checkpoint_path)->required();

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient audit");
    gradcheck->add_option("graph", graph_path)->required();
    gradcheck->add_option("--config", config_path)->required();

    app.add_subcommand("selftest", "run the kernel equivalence suites");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (validate->parsed()) return cmd_validate(graph_path);
        if (gen->parsed()) return cmd_gen_synthetic(spec_path, out_dir);
        if (enumerate->parsed()) return cmd_enumerate(graph_path, metapath, node);
        if (train->parsed())
            return cmd_train(graph_path, config_path, out_dir, no_inner, no_outer);
        if (eval->parsed()) return cmd_eval(graph_path, checkpoint_path);
        if (gradcheck->parsed()) return cmd_gradcheck(graph_path, config_path);
        if (app.got_subcommand("selftest")) return cmd_selftest();
    } catch (const hgmn::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitUsage;
}
