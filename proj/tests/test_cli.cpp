#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "support/common.hpp"

// Exercises the installed binary end to end via popen; SEPSEG_CLI is the
// target path injected by CMake.

namespace {

struct CliResult {
    int code = -1;
    std::string output;  // stdout+stderr combined
};

CliResult run_cli(const std::string& args) {
    const std::string cmd = std::string(SEPSEG_CLI) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    CliResult r;
    char buf[4096];
    while (std::fgets(buf, sizeof(buf), pipe)) r.output += buf;
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string q(const std::string& s) { return "\"" + s + "\""; }

}  // namespace

TEST_CASE("cli: phantom -> train -> predict -> evaluate smoke pipeline") {
    testsupport::TempDir tmp;
    const std::string d = tmp.file("d");

    auto r = run_cli("phantom --seed 7 --out " + q(d) + " --count 2 --val-count 1 --dims 8,24,24");
    CHECK(r.code == 0);

    r = run_cli("train --data " + q(d) + " --out " + q(tmp.file("runs")) +
                " --epochs 2 --batch 2 --patch 4,16,16 --net-base 4 --net-scales 2 --seed 3");
    CHECK(r.code == 0);
    CHECK(r.output.find("\"last_checkpoint\"") != std::string::npos);

    r = run_cli("predict --checkpoint " + q(tmp.file("runs/run_last.ckpt")) + " --in " +
                q(d + "/val/case_000.vol.json") + " --out-label " + q(tmp.file("pred.lab.json")) +
                " --window 16 --patch-depth 8");
    CHECK(r.code == 0);

    r = run_cli("evaluate --pred " + q(tmp.file("pred.lab.json")) + " --gt " +
                q(d + "/val/case_000.lab.json"));
    CHECK(r.code == 0);
    CHECK(r.output.find("\"per_class\"") != std::string::npos);
    CHECK(r.output.find("\"weighted\"") != std::string::npos);
    CHECK(r.output.find("\"dsc\"") != std::string::npos);
}

TEST_CASE("cli: param-count ratio sits in the published band") {
    const auto r = run_cli("param-count --net both --base 8 --scales 3");
    CHECK(r.code == 0);
    double ratio = 0.0;
    REQUIRE(std::sscanf(r.output.substr(r.output.find("ratio")).c_str(), "ratio %lf", &ratio) == 1);
    CHECK(ratio >= 0.25);
    CHECK(ratio <= 0.45);

    const auto sep_only = run_cli("param-count --net sepnet --base 8 --scales 3");
    CHECK(sep_only.code == 0);
    CHECK(sep_only.output.find("sepnet ") != std::string::npos);
    CHECK(sep_only.output.find("unet") == std::string::npos);
}

TEST_CASE("cli: transform applies the preset anchors") {
    testsupport::TempDir tmp;
    // One-voxel volumes at the documented probe points.
    testsupport::write_bytes(tmp.file("v.vol"), []() {
        std::string b;
        testsupport::put_u16le(b, static_cast<std::uint16_t>(200));  // h = 200 -> 0.8 under SLF1
        return b;
    }());
    testsupport::write_bytes(tmp.file("v.vol.json"),
                             R"({"dims":[1,1,1],"spacing_mm":[3,1,1],"dtype":"i16","intensity_kind":"HU"})");
    const auto r = run_cli("transform --preset SLF1 --in " + q(tmp.file("v.vol.json")) + " --out " +
                           q(tmp.file("t.vol.json")) + " --print-spec");
    CHECK(r.code == 0);
    CHECK(r.output.find("-500") != std::string::npos);
    CHECK(r.output.find("1500") != std::string::npos);

    const std::string raw = testsupport::read_bytes(tmp.file("t.vol"));
    REQUIRE(raw.size() == 4);
    float value;
    std::memcpy(&value, raw.data(), 4);
    CHECK(value == doctest::Approx(0.8f).epsilon(1e-6));
}

TEST_CASE("cli: identical seeds give byte-identical outputs") {
    testsupport::TempDir tmp;
    auto r = run_cli("phantom --seed 11 --out " + q(tmp.file("a")) + " --count 1 --val-count 1 --dims 8,16,16");
    CHECK(r.code == 0);
    r = run_cli("phantom --seed 11 --out " + q(tmp.file("b")) + " --count 1 --val-count 1 --dims 8,16,16");
    CHECK(r.code == 0);
    CHECK(testsupport::read_bytes(tmp.file("a/train/case_000.vol")) ==
          testsupport::read_bytes(tmp.file("b/train/case_000.vol")));
    CHECK(!testsupport::read_bytes(tmp.file("a/train/case_000.vol")).empty());
    CHECK(testsupport::read_bytes(tmp.file("a/val/case_000.lab")) ==
          testsupport::read_bytes(tmp.file("b/val/case_000.lab")));
}

TEST_CASE("cli: ensemble and uncertainty subcommands produce fused labels and a report") {
    testsupport::TempDir tmp;
    const std::string d = tmp.file("d");
    CHECK(run_cli("phantom --seed 13 --out " + q(d) + " --count 2 --val-count 1 --dims 8,24,24").code == 0);
    CHECK(run_cli("train --data " + q(d) + " --out " + q(tmp.file("runs")) +
                  " --epochs 2 --batch 2 --patch 4,16,16 --net-base 4 --net-scales 2 --seed 5")
              .code == 0);

    // Two members sharing a checkpoint but differing in transform.
    nlohmann::json es;
    es["members"] = {{{"checkpoint", tmp.file("runs/run_last.ckpt")}, {"transform", "SLF1"}},
                     {{"checkpoint", tmp.file("runs/run_last.ckpt")}, {"transform", "SLF2"}}};
    es["dsc_table"] = {{0.9, 0.8, 0.7, 0.6}, {0.8, 0.9, 0.6, 0.7}};
    testsupport::write_bytes(tmp.file("ens.json"), es.dump());

    auto r = run_cli("ensemble --config " + q(tmp.file("ens.json")) + " --in " +
                     q(d + "/val/case_000.vol.json") + " --out-label " + q(tmp.file("fused.lab.json")) +
                     " --out-members " + q(tmp.file("members")) + " --window 16 --patch-depth 8");
    CHECK(r.code == 0);

    r = run_cli("uncertainty --labels " + q(tmp.file("members/member_00.lab.json")) + " " +
                q(tmp.file("members/member_01.lab.json")) + " --out-entropy " +
                q(tmp.file("u.unc.json")) + " --gt " + q(d + "/val/case_000.lab.json") + " --report " +
                q(tmp.file("rep.json")));
    CHECK(r.code == 0);
    const std::string rep = testsupport::read_bytes(tmp.file("rep.json"));
    CHECK(rep.find("\"levels\"") != std::string::npos);
    CHECK(rep.find("predicted_background") != std::string::npos);

    r = run_cli("export-slices --in " + q(tmp.file("u.unc.json")) + " --axis z --index 4 --out " +
                q(tmp.file("u.pgm")));
    CHECK(r.code == 0);
    CHECK(testsupport::read_bytes(tmp.file("u.pgm")).substr(0, 2) == "P5");
}

TEST_CASE("cli: config file values apply and explicit flags override them") {
    testsupport::TempDir tmp;
    const std::string d = tmp.file("d");
    CHECK(run_cli("phantom --seed 19 --out " + q(d) + " --count 2 --val-count 1 --dims 8,24,24").code == 0);

    nlohmann::json cfg;
    cfg["data_dir"] = d;
    cfg["out_dir"] = tmp.file("from_file");
    cfg["network"] = {{"num_classes", 4}, {"base_channels", 4}, {"num_scales", 2}};
    cfg["train"] = {{"epochs", 4}, {"batch_size", 2}, {"patch", {4, 16, 16}}, {"seed", 9}};
    testsupport::write_bytes(tmp.file("cfg.json"), cfg.dump());

    auto count_log_lines = [](const std::string& path) {
        const std::string text = testsupport::read_bytes(path);
        return std::count(text.begin(), text.end(), '\n');
    };

    auto r = run_cli("train --config " + q(tmp.file("cfg.json")));
    CHECK(r.code == 0);
    CHECK(count_log_lines(tmp.file("from_file/run_log.jsonl")) == 4);  // epochs from the file

    r = run_cli("train --config " + q(tmp.file("cfg.json")) + " --epochs 2 --out " +
                q(tmp.file("from_flags")));
    CHECK(r.code == 0);
    CHECK(count_log_lines(tmp.file("from_flags/run_log.jsonl")) == 2);  // flag wins
}

TEST_CASE("cli: exit codes follow the documented taxonomy") {
    testsupport::TempDir tmp;
    // Unknown flag -> config error (2).
    CHECK(run_cli("param-count --bogus-flag 1").code == 2);
    // Unknown preset name -> config error (2).
    CHECK(run_cli("transform --preset SLF9 --print-spec").code == 2);
    // Missing file -> data error (3).
    CHECK(run_cli("predict --checkpoint " + q(tmp.file("nope.ckpt")) + " --in " +
                  q(tmp.file("nope.vol.json")) + " --out-label " + q(tmp.file("x.lab.json")))
              .code == 3);
    // Errors are single-line machine-parsable JSON on stderr.
    const auto r = run_cli("evaluate --pred " + q(tmp.file("missing.lab.json")) + " --gt " +
                           q(tmp.file("missing.lab.json")));
    CHECK(r.code == 3);
    CHECK(r.output.find("{\"code\":3") != std::string::npos);
    CHECK(r.output.find("\"error\":") != std::string::npos);
}

TEST_CASE("cli: every subcommand documents all of its flags in --help") {
    const std::vector<std::pair<std::string, std::vector<std::string>>> expected{
        {"phantom", {"--out", "--seed", "--count", "--val-count", "--dims", "--spacing", "--spec"}},
        {"transform", {"--preset", "--spec", "--in", "--out", "--print-spec"}},
        {"train",
         {"--config", "--data", "--out", "--run-name", "--transform", "--loss", "--alpha", "--seed",
          "--epochs", "--batch", "--steps", "--patch", "--window", "--lr0", "--net-base",
          "--net-scales", "--net-classes", "--precision", "--oversample-foreground"}},
        {"predict",
         {"--checkpoint", "--transform", "--in", "--out-label", "--out-prob", "--window",
          "--patch-depth"}},
        {"ensemble",
         {"--config", "--in", "--out-label", "--out-prob", "--out-members", "--window",
          "--patch-depth"}},
        {"uncertainty", {"--labels", "--out-entropy", "--gt", "--report"}},
        {"evaluate", {"--pred", "--gt", "--weights", "--out", "--table"}},
        {"export-slices", {"--in", "--axis", "--index", "--out"}},
        {"param-count", {"--net", "--base", "--scales", "--classes"}},
    };
    for (const auto& [sub, flags] : expected) {
        const auto r = run_cli(sub + " --help");
        CHECK(r.code == 0);
        for (const auto& flag : flags) {
            INFO(sub, " missing ", flag);
            CHECK(r.output.find(flag) != std::string::npos);
        }
    }
    // The top-level help documents --threads and every subcommand.
    const auto top = run_cli("--help");
    CHECK(top.output.find("--threads") != std::string::npos);
    for (const auto& [sub, flags] : expected) CHECK(top.output.find(sub) != std::string::npos);
}
