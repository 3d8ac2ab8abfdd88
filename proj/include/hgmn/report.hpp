#pragma once

#include <string>
#include <vector>

#include "hgmn/model.hpp"

namespace hgmn {

/// Provenance record for one run: enough to reproduce it bit-for-bit.
struct RunManifest {
    std::string build_id;
    std::string config_text;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, std::string>> input_digests;  // path -> fnv1a64
    std::vector<EpochRow> rows;
    Metrics test;
    Index best_epoch = -1;
    double best_val_macro = -1.0;
};

std::string build_id();

/// Writes content to path via a temp file + rename.
void atomic_write_file(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);
std::string file_digest_hex(const std::string& path);

/// metrics.csv: one row per epoch plus a trailing row holding the test
/// metrics (epoch column reads "test", metric columns hold test values).
std::string metrics_csv(const std::vector<EpochRow>& rows, const Metrics& test);

std::string manifest_json(const RunManifest& manifest);

}  // namespace hgmn
