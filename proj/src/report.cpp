#include "hgmn/report.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#ifndef HGMN_BUILD_ID
#define HGMN_BUILD_ID "unknown"
#endif

namespace hgmn {

using nlohmann::json;

std::string build_id() { return HGMN_BUILD_ID; }

void atomic_write_file(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write file: " + tmp);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("write failed: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed for " + path + ": " + ec.message());
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string file_digest_hex(const std::string& path) { return fnv1a64_hex(read_file(path)); }

namespace {

std::string csv_num(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace

std::string metrics_csv(const std::vector<EpochRow>& rows, const Metrics& test) {
    std::string out = "epoch,train_loss,val_acc,val_micro_f1,val_macro_f1\n";
    for (const EpochRow& r : rows) {
        out += std::to_string(r.epoch) + "," + csv_num(r.train_loss) + "," +
               csv_num(r.val_accuracy) + "," + csv_num(r.val_micro_f1) + "," +
               csv_num(r.val_macro_f1) + "\n";
    }
    out += "test," + csv_num(test.loss) + "," + csv_num(test.accuracy) + "," +
           csv_num(test.micro_f1) + "," + csv_num(test.macro_f1) + "\n";
    return out;
}

std::string manifest_json(const RunManifest& m) {
    json doc;
    doc["build_id"] = m.build_id;
    doc["config"] = m.config_text;
    doc["seed"] = m.seed;
    json inputs = json::object();
    for (const auto& [path, digest] : m.input_digests) inputs[path] = digest;
    doc["inputs"] = inputs;
    json epochs = json::array();
    for (const EpochRow& r : m.rows)
        epochs.push_back(json{{"epoch", r.epoch},
                              {"train_loss", r.train_loss},
                              {"val_acc", r.val_accuracy},
                              {"val_micro_f1", r.val_micro_f1},
                              {"val_macro_f1", r.val_macro_f1}});
    doc["epochs"] = epochs;
    doc["test"] = json{{"loss", m.test.loss},
                       {"accuracy", m.test.accuracy},
                       {"micro_f1", m.test.micro_f1},
                       {"macro_f1", m.test.macro_f1}};
    doc["best_epoch"] = m.best_epoch;
    doc["best_val_macro_f1"] = m.best_val_macro;
    return doc.dump(2) + "\n";
}

}  // namespace hgmn
