#include "hgmn/hetgraph.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace hgmn {

using nlohmann::json;

TypeId HeteroGraph::type_of(NodeId v) const {
    if (v < 0 || v >= num_nodes())
        throw ContractError("node id " + std::to_string(v) + " out of range");
    return node_type[static_cast<std::size_t>(v)];
}

std::vector<NodeId> HeteroGraph::nodes_of_type(TypeId t) const {
    std::vector<NodeId> out;
    for (NodeId v = 0; v < num_nodes(); ++v)
        if (node_type[static_cast<std::size_t>(v)] == t) out.push_back(v);
    return out;
}

std::optional<TypeId> HeteroGraph::node_type_id(const std::string& name) const {
    for (std::size_t i = 0; i < node_types.size(); ++i)
        if (node_types[i].name == name) return static_cast<TypeId>(i);
    return std::nullopt;
}

std::optional<EdgeTypeId> HeteroGraph::edge_type_id(const std::string& name) const {
    for (std::size_t i = 0; i < edge_types.size(); ++i)
        if (edge_types[i].name == name) return static_cast<EdgeTypeId>(i);
    return std::nullopt;
}

const MetapathSchema* HeteroGraph::find_metapath(const std::string& name) const {
    for (const auto& m : metapaths)
        if (m.name == name) return &m;
    return nullptr;
}

int HeteroGraph::num_classes() const {
    int c = 0;
    for (int lab : labels) c = std::max(c, lab + 1);
    return c;
}

bool HeteroGraph::step_allowed(EdgeTypeId e, TypeId from, TypeId to) const {
    const EdgeTypeInfo& info = edge_types[static_cast<std::size_t>(e)];
    if (info.src == from && info.dst == to) return true;
    return info.symmetric && info.src == to && info.dst == from;
}

namespace {

[[noreturn]] void fail(const std::string& msg) { throw ValidationError(msg); }

json parse_json(const std::string& text) {
    json doc = json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (doc.is_discarded()) fail("graph document is not valid JSON");
    return doc;
}

}  // namespace

HeteroGraph load_graph(const std::string& json_text) {
    json doc = parse_json(json_text);
    HeteroGraph g;

    for (const auto& nt : doc.value("node_types", json::array())) {
        HeteroGraph::NodeTypeInfo info;
        info.name = nt.at("name").get<std::string>();
        info.feature_dim = nt.at("feature_dim").get<Index>();
        if (info.feature_dim <= 0) fail("node type '" + info.name + "' has non-positive feature_dim");
        if (g.node_type_id(info.name)) fail("duplicate node type '" + info.name + "'");
        g.node_types.push_back(info);
    }
    if (g.node_types.empty()) fail("graph declares no node types");

    for (const auto& et : doc.value("edge_types", json::array())) {
        HeteroGraph::EdgeTypeInfo info;
        info.name = et.at("name").get<std::string>();
        auto src = g.node_type_id(et.at("src_type").get<std::string>());
        auto dst = g.node_type_id(et.at("dst_type").get<std::string>());
        if (!src || !dst)
            fail("edge type '" + info.name + "' references an unknown node type");
        info.src = *src;
        info.dst = *dst;
        info.symmetric = et.value("symmetric", false);
        if (g.edge_type_id(info.name)) fail("duplicate edge type '" + info.name + "'");
        g.edge_types.push_back(info);
    }

    const auto& nodes = doc.value("nodes", json::array());
    if (nodes.empty()) fail("graph has no nodes");
    const Index n = static_cast<Index>(nodes.size());
    g.node_type.assign(static_cast<std::size_t>(n), -1);
    g.features.resize(static_cast<std::size_t>(n));
    g.labels.assign(static_cast<std::size_t>(n), -1);
    for (const auto& nd : nodes) {
        const NodeId id = nd.at("id").get<NodeId>();
        if (id < 0 || id >= n)
            fail("node id " + std::to_string(id) + " not in dense range 0.." +
                 std::to_string(n - 1));
        if (g.node_type[static_cast<std::size_t>(id)] != -1)
            fail("duplicate node id " + std::to_string(id));
        auto t = g.node_type_id(nd.at("type").get<std::string>());
        if (!t) fail("node " + std::to_string(id) + " has unknown type");
        g.node_type[static_cast<std::size_t>(id)] = *t;
        const auto& feats = nd.at("features");
        const Index want = g.node_types[static_cast<std::size_t>(*t)].feature_dim;
        if (static_cast<Index>(feats.size()) != want)
            fail("node " + std::to_string(id) + " has " + std::to_string(feats.size()) +
                 " features, type '" + g.node_types[static_cast<std::size_t>(*t)].name +
                 "' declares " + std::to_string(want));
        Eigen::VectorXd x(want);
        for (Index i = 0; i < want; ++i) x[i] = feats[static_cast<std::size_t>(i)].get<double>();
        if (!x.allFinite()) fail("node " + std::to_string(id) + " has non-finite features");
        g.features[static_cast<std::size_t>(id)] = std::move(x);
        if (nd.contains("label") && !nd.at("label").is_null())
            g.labels[static_cast<std::size_t>(id)] = nd.at("label").get<int>();
    }

    // arcs per edge type; symmetric types keep both directions
    std::vector<std::set<std::pair<NodeId, NodeId>>> arcs(g.edge_types.size());
    g.total_degree.assign(static_cast<std::size_t>(n), 0);
    std::vector<std::set<std::pair<NodeId, NodeId>>> unique_edges(g.edge_types.size());
    for (const auto& ed : doc.value("edges", json::array())) {
        auto e = g.edge_type_id(ed.at("type").get<std::string>());
        if (!e) fail("edge references unknown edge type '" + ed.at("type").get<std::string>() + "'");
        NodeId s = ed.at("src").get<NodeId>();
        NodeId d = ed.at("dst").get<NodeId>();
        if (s < 0 || s >= n || d < 0 || d >= n)
            fail("edge (" + std::to_string(s) + " -> " + std::to_string(d) + ") has out-of-range endpoint");
        const auto& info = g.edge_types[static_cast<std::size_t>(*e)];
        const TypeId ts = g.node_type[static_cast<std::size_t>(s)];
        const TypeId td = g.node_type[static_cast<std::size_t>(d)];
        if (ts == info.src && td == info.dst) {
            // declared orientation
        } else if (info.symmetric && ts == info.dst && td == info.src) {
            std::swap(s, d);  // undirected edge given in reverse orientation
        } else {
            fail("edge (" + std::to_string(s) + " -> " + std::to_string(d) + ") of type '" +
                 info.name + "' violates signature (" +
                 g.node_types[static_cast<std::size_t>(info.src)].name + ", " +
                 g.node_types[static_cast<std::size_t>(info.dst)].name + ")");
        }
        auto& set = arcs[static_cast<std::size_t>(*e)];
        set.insert({s, d});
        if (info.symmetric) set.insert({d, s});
        // degree counts each distinct edge once per endpoint
        const std::pair<NodeId, NodeId> key =
            info.symmetric ? std::pair<NodeId, NodeId>{std::min(s, d), std::max(s, d)}
                           : std::pair<NodeId, NodeId>{s, d};
        if (unique_edges[static_cast<std::size_t>(*e)].insert(key).second) {
            g.total_degree[static_cast<std::size_t>(s)] += 1;
            g.total_degree[static_cast<std::size_t>(d)] += 1;
        }
    }
    g.adjacency.resize(g.edge_types.size());
    for (std::size_t e = 0; e < g.edge_types.size(); ++e) {
        auto& csr = g.adjacency[e];
        csr.offsets.assign(static_cast<std::size_t>(n) + 1, 0);
        for (const auto& [s, d] : arcs[e]) csr.offsets[static_cast<std::size_t>(s) + 1] += 1;
        for (std::size_t i = 1; i < csr.offsets.size(); ++i) csr.offsets[i] += csr.offsets[i - 1];
        csr.targets.resize(arcs[e].size());
        std::vector<Index> cursor(csr.offsets.begin(), csr.offsets.end() - 1);
        for (const auto& [s, d] : arcs[e])
            csr.targets[static_cast<std::size_t>(cursor[static_cast<std::size_t>(s)]++)] = d;
        // std::set iteration is already (src, dst)-sorted, so each
        // neighbor list comes out sorted
    }

    for (const auto& mp : doc.value("metapaths", json::array())) {
        MetapathSchema schema;
        schema.name = mp.at("name").get<std::string>();
        if (g.find_metapath(schema.name)) fail("duplicate metapath '" + schema.name + "'");
        for (const auto& tn : mp.at("node_types")) {
            auto t = g.node_type_id(tn.get<std::string>());
            if (!t) fail("metapath '" + schema.name + "' references unknown node type");
            schema.node_types.push_back(*t);
        }
        for (const auto& en : mp.at("edge_types")) {
            auto e = g.edge_type_id(en.get<std::string>());
            if (!e) fail("metapath '" + schema.name + "' references unknown edge type");
            schema.edge_types.push_back(*e);
        }
        if (schema.node_types.size() < 2)
            fail("metapath '" + schema.name + "' needs at least 2 node types");
        if (schema.edge_types.size() + 1 != schema.node_types.size())
            fail("metapath '" + schema.name + "' edge/node type counts disagree");
        for (std::size_t i = 0; i < schema.edge_types.size(); ++i) {
            if (!g.step_allowed(schema.edge_types[i], schema.node_types[i],
                                schema.node_types[i + 1]))
                fail("metapath '" + schema.name + "' step " + std::to_string(i) +
                     " violates its edge type signature");
        }
        g.metapaths.push_back(std::move(schema));
    }

    if (doc.contains("splits")) {
        auto read_split = [&](const char* key) {
            std::vector<NodeId> ids;
            for (const auto& v : doc.at("splits").value(key, json::array())) {
                NodeId id = v.get<NodeId>();
                if (id < 0 || id >= n)
                    fail(std::string("split '") + key + "' references out-of-range node " +
                         std::to_string(id));
                ids.push_back(id);
            }
            return ids;
        };
        g.splits.train = read_split("train");
        g.splits.val = read_split("val");
        g.splits.test = read_split("test");
    }
    return g;
}

HeteroGraph load_graph_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open graph file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return load_graph(ss.str());
}

namespace {

struct Dfs {
    const HeteroGraph& g;
    const MetapathSchema& schema;
    const EnumOptions& opts;
    int schema_index;
    std::vector<MetapathInstance>* out = nullptr;  // null => counting only
    Index count = 0;
    std::vector<NodeId> path;

    bool done() const { return count >= opts.max_instances_per_node; }

    void run(NodeId v, std::size_t pos) {
        if (done()) return;
        if (pos + 1 == schema.node_types.size()) {
            count += 1;
            if (out) out->push_back(MetapathInstance{schema_index, path});
            return;
        }
        const EdgeTypeId e = schema.edge_types[pos];
        for (NodeId next : g.adjacency[static_cast<std::size_t>(e)].neighbors(v)) {
            if (done()) return;
            if (opts.simple_paths_only &&
                std::find(path.begin(), path.end(), next) != path.end())
                continue;
            path.push_back(next);
            run(next, pos + 1);
            path.pop_back();
        }
    }
};

}  // namespace

std::vector<MetapathInstance> enumerate_instances(const HeteroGraph& g,
                                                  const MetapathSchema& schema, int schema_index,
                                                  NodeId start, const EnumOptions& opts) {
    if (g.type_of(start) != schema.node_types[0])
        throw ContractError("node " + std::to_string(start) + " does not have metapath '" +
                            schema.name + "' start type");
    std::vector<MetapathInstance> out;
    Dfs dfs{g, schema, opts, schema_index, &out, 0, {start}};
    dfs.run(start, 0);
    // depth-first traversal over sorted adjacency emits walks in
    // lexicographic order already
    return out;
}

Index count_instances(const HeteroGraph& g, std::span<const MetapathSchema> schemas, NodeId node,
                      const EnumOptions& opts) {
    Index total = 0;
    for (std::size_t k = 0; k < schemas.size(); ++k) {
        if (g.type_of(node) != schemas[k].node_types[0]) continue;
        Dfs dfs{g, schemas[k], opts, static_cast<int>(k), nullptr, 0, {node}};
        dfs.run(node, 0);
        total += dfs.count;
    }
    return total;
}

Token build_token(const HeteroGraph& g, std::span<const MetapathSchema> schemas, NodeId node,
                  const EnumOptions& opts) {
    Token tok;
    tok.target = node;
    tok.per_schema.resize(schemas.size());
    for (std::size_t k = 0; k < schemas.size(); ++k) {
        if (g.type_of(node) != schemas[k].node_types[0]) continue;
        tok.per_schema[k] =
            enumerate_instances(g, schemas[k], static_cast<int>(k), node, opts);
    }
    return tok;
}

Index degree(const HeteroGraph& g, NodeId node) {
    if (node < 0 || node >= g.num_nodes())
        throw ContractError("degree: node id " + std::to_string(node) + " out of range");
    return g.total_degree[static_cast<std::size_t>(node)];
}

MetapathGraph metapath_graph(const HeteroGraph& g, const MetapathSchema& schema,
                             int schema_index, const EnumOptions& opts) {
    std::set<NodeId> ids;
    for (NodeId v = 0; v < g.num_nodes(); ++v) {
        if (g.type_of(v) != schema.node_types[0]) continue;
        for (const auto& inst : enumerate_instances(g, schema, schema_index, v, opts))
            ids.insert(inst.nodes.begin(), inst.nodes.end());
    }
    MetapathGraph mg;
    mg.schema_index = schema_index;
    mg.nodes.assign(ids.begin(), ids.end());
    return mg;
}

}  // namespace hgmn
