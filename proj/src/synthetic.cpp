#include "hgmn/synthetic.hpp"

#include <algorithm>
#include <set>

#include "json.hpp"

#include "hgmn/hetgraph.hpp"

namespace hgmn {

using nlohmann::json;

SyntheticSpec SyntheticSpec::from_json(const std::string& text) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded()) throw ValidationError("synthetic spec is not valid JSON");
    SyntheticSpec s;
    s.items = doc.value("items", s.items);
    s.contexts = doc.value("contexts", s.contexts);
    s.num_classes = doc.value("num_classes", s.num_classes);
    s.signal = doc.value("signal", s.signal);
    s.item_edges = doc.value("item_edges", s.item_edges);
    s.context_edges = doc.value("context_edges", s.context_edges);
    s.item_feature_dim = doc.value("item_feature_dim", s.item_feature_dim);
    s.context_feature_dim = doc.value("context_feature_dim", s.context_feature_dim);
    s.seed = doc.value("seed", s.seed);
    s.validate();
    return s;
}

void SyntheticSpec::validate() const {
    if (items <= 0 || contexts <= 0) throw ValidationError("synthetic: node counts must be positive");
    if (num_classes < 2) throw ValidationError("synthetic: need at least 2 classes");
    if (contexts < num_classes)
        throw ValidationError("synthetic: need at least one context per class");
    if (signal < 0.0 || signal > 1.0) throw ValidationError("synthetic: signal must be in [0,1]");
    if (item_edges < 1) throw ValidationError("synthetic: item_edges must be >= 1");
    if (context_edges < 0) throw ValidationError("synthetic: context_edges must be >= 0");
    if (item_feature_dim < 1) throw ValidationError("synthetic: item_feature_dim must be >= 1");
    if (context_feature_dim < static_cast<Index>(num_classes))
        throw ValidationError("synthetic: context_feature_dim must cover the class embedding");
}

namespace {

struct Generated {
    std::vector<int> item_class;
    std::vector<int> context_class;
    std::set<std::pair<NodeId, NodeId>> ic_edges;  // (item, context)
    std::set<std::pair<NodeId, NodeId>> cc_edges;  // (context, context), lo < hi
    bool every_item_covered = false;
};

Generated generate_structure(const SyntheticSpec& spec, Rng& rng) {
    Generated g;
    g.context_class.resize(static_cast<std::size_t>(spec.contexts));
    std::vector<std::vector<NodeId>> contexts_by_class(
        static_cast<std::size_t>(spec.num_classes));
    for (Index c = 0; c < spec.contexts; ++c) {
        const int cls = static_cast<int>(c % spec.num_classes);
        g.context_class[static_cast<std::size_t>(c)] = cls;
        contexts_by_class[static_cast<std::size_t>(cls)].push_back(c);
    }
    g.item_class.resize(static_cast<std::size_t>(spec.items));
    for (Index i = 0; i < spec.items; ++i)
        g.item_class[static_cast<std::size_t>(i)] =
            static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.num_classes)));

    std::vector<NodeId> all_contexts(static_cast<std::size_t>(spec.contexts));
    for (Index c = 0; c < spec.contexts; ++c) all_contexts[static_cast<std::size_t>(c)] = c;

    for (Index i = 0; i < spec.items; ++i) {
        const int cls = g.item_class[static_cast<std::size_t>(i)];
        std::set<NodeId> picked;
        for (Index attempt = 0; attempt < 20 * spec.item_edges &&
                                static_cast<Index>(picked.size()) < spec.item_edges;
             ++attempt) {
            const auto& pool = rng.uniform() < spec.signal
                                   ? contexts_by_class[static_cast<std::size_t>(cls)]
                                   : all_contexts;
            picked.insert(pool[rng.below(pool.size())]);
        }
        for (NodeId c : picked) g.ic_edges.insert({i, c});
    }

    for (Index c = 0; c < spec.contexts; ++c) {
        const int cls = g.context_class[static_cast<std::size_t>(c)];
        std::set<NodeId> picked;
        for (Index attempt = 0; attempt < 20 * std::max<Index>(spec.context_edges, 1) &&
                                static_cast<Index>(picked.size()) < spec.context_edges;
             ++attempt) {
            NodeId other;
            if (rng.uniform() < spec.signal) {
                const auto& pool = contexts_by_class[static_cast<std::size_t>(cls)];
                other = pool[rng.below(pool.size())];
            } else {
                other = static_cast<NodeId>(rng.below(static_cast<std::uint64_t>(spec.contexts)));
            }
            if (other != c) picked.insert(other);
        }
        for (NodeId other : picked)
            g.cc_edges.insert({std::min<NodeId>(c, other), std::max<NodeId>(c, other)});
    }

    g.every_item_covered = true;
    std::vector<bool> has_edge(static_cast<std::size_t>(spec.items), false);
    for (const auto& [i, c] : g.ic_edges) has_edge[static_cast<std::size_t>(i)] = true;
    for (bool b : has_edge) g.every_item_covered = g.every_item_covered && b;
    return g;
}

}  // namespace

std::string gen_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Generated gen;
    Rng rng(spec.seed);
    bool ok = false;
    for (int attempt = 0; attempt < 10 && !ok; ++attempt) {
        Rng attempt_rng(spec.seed + static_cast<std::uint64_t>(attempt));
        gen = generate_structure(spec, attempt_rng);
        if (gen.every_item_covered) {
            ok = true;
            rng = attempt_rng;  // feature noise continues the successful stream
        }
    }
    if (!ok)
        throw ValidationError(
            "synthetic: could not cover every labeled node with a metapath instance; "
            "increase item_edges or density");

    json doc;
    doc["node_types"] = json::array({
        json{{"name", "item"}, {"feature_dim", spec.item_feature_dim}},
        json{{"name", "context"}, {"feature_dim", spec.context_feature_dim}},
    });
    doc["edge_types"] = json::array({
        json{{"name", "ic"}, {"src_type", "item"}, {"dst_type", "context"}, {"symmetric", true}},
        json{{"name", "cc"}, {"src_type", "context"}, {"dst_type", "context"}, {"symmetric", true}},
    });

    json nodes = json::array();
    for (Index i = 0; i < spec.items; ++i) {
        json feats = json::array();
        for (Index j = 0; j < spec.item_feature_dim; ++j) feats.push_back(rng.uniform(-1.0, 1.0));
        nodes.push_back(json{{"id", i},
                             {"type", "item"},
                             {"features", feats},
                             {"label", gen.item_class[static_cast<std::size_t>(i)]}});
    }
    for (Index c = 0; c < spec.contexts; ++c) {
        json feats = json::array();
        const int cls = gen.context_class[static_cast<std::size_t>(c)];
        for (Index j = 0; j < spec.context_feature_dim; ++j) {
            double v = rng.uniform(-1.0, 1.0);
            if (j == static_cast<Index>(cls)) v += 2.0;
            feats.push_back(v);
        }
        nodes.push_back(json{{"id", spec.items + c}, {"type", "context"}, {"features", feats}});
    }
    doc["nodes"] = nodes;

    json edges = json::array();
    for (const auto& [i, c] : gen.ic_edges)
        edges.push_back(json{{"type", "ic"}, {"src", i}, {"dst", spec.items + c}});
    for (const auto& [a, b] : gen.cc_edges)
        edges.push_back(json{{"type", "cc"}, {"src", spec.items + a}, {"dst", spec.items + b}});
    doc["edges"] = edges;

    doc["metapaths"] = json::array({
        json{{"name", "ici"},
             {"node_types", json::array({"item", "context", "item"})},
             {"edge_types", json::array({"ic", "ic"})}},
        json{{"name", "icci"},
             {"node_types", json::array({"item", "context", "context", "item"})},
             {"edge_types", json::array({"ic", "cc", "ic"})}},
        json{{"name", "cic"},
             {"node_types", json::array({"context", "item", "context"})},
             {"edge_types", json::array({"ic", "ic"})}},
    });

    std::vector<NodeId> item_ids(static_cast<std::size_t>(spec.items));
    for (Index i = 0; i < spec.items; ++i) item_ids[static_cast<std::size_t>(i)] = i;
    for (std::size_t i = item_ids.size(); i > 1; --i)
        std::swap(item_ids[i - 1], item_ids[static_cast<std::size_t>(rng.below(i))]);
    const std::size_t n_train = static_cast<std::size_t>(0.6 * static_cast<double>(spec.items));
    const std::size_t n_val = static_cast<std::size_t>(0.2 * static_cast<double>(spec.items));
    json splits;
    splits["train"] = json::array();
    splits["val"] = json::array();
    splits["test"] = json::array();
    for (std::size_t i = 0; i < item_ids.size(); ++i) {
        if (i < n_train) splits["train"].push_back(item_ids[i]);
        else if (i < n_train + n_val) splits["val"].push_back(item_ids[i]);
        else splits["test"].push_back(item_ids[i]);
    }
    doc["splits"] = splits;
    return doc.dump(2) + "\n";
}

}  // namespace hgmn
