#include <fstream>
#include <sstream>

#include "hgmn/model.hpp"

namespace hgmn {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw ValidationError("config: key '" + key + "' expects true|false, got '" + v + "'");
}

Index parse_index(const std::string& v, const std::string& key) {
    try {
        std::size_t used = 0;
        const long long x = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return static_cast<Index>(x);
    } catch (const std::exception&) {
        throw ValidationError("config: key '" + key + "' expects an integer, got '" + v + "'");
    }
}

double parse_double(const std::string& v, const std::string& key) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ValidationError("config: key '" + key + "' expects a number, got '" + v + "'");
    }
}

}  // namespace

ModelConfig parse_config_text(const std::string& text) {
    ModelConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        line_no += 1;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError("config: line " + std::to_string(line_no) +
                                  " is not 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key == "hidden_dim") cfg.hidden_dim = parse_index(value, key);
        else if (key == "num_layers") cfg.num_layers = parse_index(value, key);
        else if (key == "num_heads") cfg.num_heads = parse_index(value, key);
        else if (key == "metapath_attention_dim") cfg.metapath_attention_dim = parse_index(value, key);
        else if (key == "learning_rate") cfg.learning_rate = parse_double(value, key);
        else if (key == "weight_decay") cfg.weight_decay = parse_double(value, key);
        else if (key == "num_epochs") cfg.num_epochs = parse_index(value, key);
        else if (key == "inner_order_mode") cfg.inner_order_mode = value;
        else if (key == "outer_order_mode") cfg.outer_order_mode = value;
        else if (key == "instance_encoder") cfg.instance_encoder = value;
        else if (key == "zoh_exact") cfg.zoh_exact = parse_bool(value, key);
        else if (key == "max_instances_per_node") cfg.max_instances_per_node = parse_index(value, key);
        else if (key == "simple_paths_only") cfg.simple_paths_only = parse_bool(value, key);
        else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_index(value, key));
        else if (key == "ssm_state_size") cfg.ssm_state_size = parse_index(value, key);
        else if (key == "ssm_expansion") cfg.ssm_expansion = parse_index(value, key);
        else if (key == "ssm_conv_width") cfg.ssm_conv_width = parse_index(value, key);
        else throw ValidationError("config: unknown key '" + key + "'");
    }
    try {
        cfg.validate();
    } catch (const ContractError& e) {
        throw ValidationError(e.what());
    }
    return cfg;
}

ModelConfig parse_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

}  // namespace hgmn
