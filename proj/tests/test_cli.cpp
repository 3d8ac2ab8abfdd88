// End-to-end checks of the command-line surface: every subcommand, the
// documented exit codes, and file-level reproducibility.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hgmn/report.hpp"

namespace fs = std::filesystem;

namespace {

struct CmdResult {
    int exit_code = -1;
    std::string output;
};

CmdResult run_cli(const std::string& args) {
    const std::string out_path =
        (fs::temp_directory_path() / ("hgmn_cli_out_" + std::to_string(::getpid()) + ".txt"))
            .string();
    const std::string cmd = std::string(HGMN_CLI_PATH) + " " + args + " > " + out_path + " 2>&1";
    const int raw = std::system(cmd.c_str());
    CmdResult r;
    r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    std::ifstream in(out_path);
    std::stringstream ss;
    ss << in.rdbuf();
    r.output = ss.str();
    fs::remove(out_path);
    return r;
}

std::string fixture(const std::string& name) { return std::string(HGMN_FIXTURES) + "/" + name; }

fs::path fresh_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("hgmn_test_" + tag + "_" +
                                                std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

}  // namespace

TEST_CASE("validate accepts the reference graph and rejects the bad fixture") {
    CHECK(run_cli("validate " + fixture("g0.json")).exit_code == 0);

    const CmdResult bad = run_cli("validate " + fixture("bad_signature.json"));
    CHECK(bad.exit_code == 1);
    CHECK(bad.output.find("violates signature") != std::string::npos);
}

TEST_CASE("unknown flags and missing subcommands are usage errors") {
    CHECK(run_cli("validate --bogus-flag x").exit_code == 64);
    CHECK(run_cli("").exit_code == 64);
    CHECK(run_cli("frobnicate").exit_code == 64);
}

TEST_CASE("enumerate prints the hand-derived count first") {
    const CmdResult r = run_cli("enumerate " + fixture("g0.json") + " --metapath apa --node 0");
    CHECK(r.exit_code == 0);
    CHECK(first_line(r.output) == "3");

    const CmdResult all = run_cli("enumerate " + fixture("g0.json") + " --metapath apa");
    CHECK(all.exit_code == 0);
    CHECK(all.output.find("0 3") != std::string::npos);
    CHECK(all.output.find("1 3") != std::string::npos);

    CHECK(run_cli("enumerate " + fixture("g0.json") + " --metapath nope").exit_code == 1);
}

TEST_CASE("selftest reports kernel equivalence max errors") {
    const CmdResult r = run_cli("selftest");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("scan_duality") != std::string::npos);
    CHECK(r.output.find("FAIL") == std::string::npos);
}

TEST_CASE("gen-synthetic is deterministic per seed") {
    const fs::path d1 = fresh_dir("gen1");
    const fs::path d2 = fresh_dir("gen2");
    CHECK(run_cli("gen-synthetic --spec " + fixture("small_spec.json") + " --out " +
                  d1.string())
              .exit_code == 0);
    CHECK(run_cli("gen-synthetic --spec " + fixture("small_spec.json") + " --out " +
                  d2.string())
              .exit_code == 0);
    CHECK(hgmn::read_file((d1 / "graph.json").string()) ==
          hgmn::read_file((d2 / "graph.json").string()));
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("train, eval, gradcheck and ablation flags work end to end") {
    const fs::path gen_dir = fresh_dir("train_gen");
    REQUIRE(run_cli("gen-synthetic --spec " + fixture("small_spec.json") + " --out " +
                    gen_dir.string())
                .exit_code == 0);
    const std::string graph = (gen_dir / "graph.json").string();

    const fs::path run1 = fresh_dir("run1");
    const CmdResult t1 = run_cli("train " + graph + " --config " + fixture("tiny.config") +
                                 " --out " + run1.string());
    CHECK(t1.exit_code == 0);
    CHECK(fs::exists(run1 / "metrics.csv"));
    CHECK(fs::exists(run1 / "manifest.json"));
    CHECK(fs::exists(run1 / "checkpoint_best.bin"));
    CHECK(fs::exists(run1 / "checkpoint_final.bin"));

    // epochs=4 -> header + 4 epoch rows + test row; every row parses into
    // exactly five fields
    {
        std::istringstream csv(hgmn::read_file((run1 / "metrics.csv").string()));
        std::string line;
        int rows = 0;
        std::getline(csv, line);
        CHECK(line == "epoch,train_loss,val_acc,val_micro_f1,val_macro_f1");
        std::string last;
        while (std::getline(csv, line)) {
            if (line.empty()) continue;
            rows += 1;
            last = line;
            CHECK(std::count(line.begin(), line.end(), ',') == 4);
        }
        CHECK(rows == 5);
        CHECK(last.rfind("test,", 0) == 0);
    }

    // identical rerun is byte-identical
    const fs::path run2 = fresh_dir("run2");
    REQUIRE(run_cli("train " + graph + " --config " + fixture("tiny.config") + " --out " +
                    run2.string())
                .exit_code == 0);
    CHECK(hgmn::read_file((run1 / "metrics.csv").string()) ==
          hgmn::read_file((run2 / "metrics.csv").string()));
    CHECK(hgmn::read_file((run1 / "checkpoint_best.bin").string()) ==
          hgmn::read_file((run2 / "checkpoint_best.bin").string()));
    CHECK(hgmn::read_file((run1 / "checkpoint_final.bin").string()) ==
          hgmn::read_file((run2 / "checkpoint_final.bin").string()));

    // manifest digests track input bytes: present, stable, and sensitive
    {
        const std::string manifest = hgmn::read_file((run1 / "manifest.json").string());
        const std::string digest = hgmn::file_digest_hex(graph);
        CHECK(manifest.find(digest) != std::string::npos);
        CHECK(hgmn::file_digest_hex(graph) == digest);
        const std::string copy = (gen_dir / "copy.json").string();
        hgmn::atomic_write_file(copy, hgmn::read_file(graph) + " ");
        CHECK(hgmn::file_digest_hex(copy) != digest);
    }

    const CmdResult ev =
        run_cli("eval " + graph + " --checkpoint " + (run1 / "checkpoint_best.bin").string());
    CHECK(ev.exit_code == 0);
    CHECK(ev.output.find("\"macro_f1\"") != std::string::npos);

    // ablation flags: seeded random orders reproduce bitwise
    const fs::path ab1 = fresh_dir("ab1");
    const fs::path ab2 = fresh_dir("ab2");
    REQUIRE(run_cli("train " + graph + " --config " + fixture("tiny.config") + " --out " +
                    ab1.string() + " --no-inner-order --no-outer-order")
                .exit_code == 0);
    REQUIRE(run_cli("train " + graph + " --config " + fixture("tiny.config") + " --out " +
                    ab2.string() + " --no-inner-order --no-outer-order")
                .exit_code == 0);
    CHECK(hgmn::read_file((ab1 / "metrics.csv").string()) ==
          hgmn::read_file((ab2 / "metrics.csv").string()));
    CHECK(hgmn::read_file((ab1 / "checkpoint_final.bin").string()) ==
          hgmn::read_file((ab2 / "checkpoint_final.bin").string()));

    const CmdResult gc = run_cli("gradcheck " + fixture("grad12.json") + " --config " +
                                 fixture("grad12.config"));
    CHECK(gc.exit_code == 0);
    CHECK(gc.output.find("PASS") != std::string::npos);

    for (const auto& d : {gen_dir, run1, run2, ab1, ab2}) fs::remove_all(d);
}
