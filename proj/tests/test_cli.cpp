#include <fstream>
#include <iostream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "scratch_dir.hpp"
#include "semdec/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Captured {
    int code;
    std::string out;
    std::string err;
};

Captured run_cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    auto* old_out = std::cout.rdbuf(out.rdbuf());
    auto* old_err = std::cerr.rdbuf(err.rdbuf());
    const int code = semdec::cli::run(args);
    std::cout.rdbuf(old_out);
    std::cerr.rdbuf(old_err);
    return {code, out.str(), err.str()};
}

// Sets `flag` to `value`, replacing an existing occurrence.
std::vector<std::string> with(std::vector<std::string> args, const std::string& flag, const std::string& value) {
    for (std::size_t i = 0; i + 1 < args.size(); ++i) {
        if (args[i] == flag) {
            args[i + 1] = value;
            return args;
        }
    }
    args.push_back(flag);
    args.push_back(value);
    return args;
}

std::size_t count_lines(const std::string& s) { return std::size_t(std::count(s.begin(), s.end(), '\n')); }

std::vector<std::string> small_synth(const fs::path& out) {
    return {"synth", "--out", out.string(), "--k-seen", "6", "--k-unseen", "3", "--n-per-class", "5", "--d-sem", "3",
            "--d-dom", "2", "--visual-dim", "8", "--neural-dim", "6", "--seed", "7"};
}

std::vector<std::string> small_train(const fs::path& pack, const fs::path& out, int epochs) {
    return {"train", "--pack", pack.string(), "--out", out.string(), "--mode", "ve_sdn", "--epochs",
            std::to_string(epochs), "--batch", "8", "--d-joint", "4", "--lr", "1e-3"};
}

}  // namespace

TEST_CASE("synth, train, eval and analyze end to end") {
    const fs::path dir = scratch_dir("cli_e2e");
    REQUIRE(run_cli(small_synth(dir / "pack")).code == 0);
    REQUIRE(run_cli(small_synth(dir / "pack2")).code == 0);
    for (const char* f : {"manifest.json", "visual.f32", "neural.f32", "labels.i32"}) {
        CHECK(read_bytes(dir / "pack" / f) == read_bytes(dir / "pack2" / f));
    }

    const Captured tr = run_cli(small_train(dir / "pack", dir / "run", 4));
    REQUIRE(tr.code == 0);
    CHECK(count_lines(read_bytes(dir / "run" / "eval.csv")) == 1 + 4);
    const auto hist = nlohmann::json::parse(read_bytes(dir / "run" / "history.json"));
    CHECK(hist.at("epochs").size() == 4);
    CHECK(count_lines(read_bytes(dir / "run" / "history.csv")) == 1 + 4 * 4);  // 30 seen rows, batch 8
    CHECK(fs::exists(dir / "run" / "checkpoint" / "manifest.json"));

    REQUIRE(run_cli(small_train(dir / "pack", dir / "run2", 4)).code == 0);
    CHECK(read_bytes(dir / "run" / "history.csv") == read_bytes(dir / "run2" / "history.csv"));

    const std::vector<std::string> ev{"eval", "--checkpoint", (dir / "run" / "checkpoint").string(), "--pack",
                                      (dir / "pack").string(), "--out", (dir / "ev1").string()};
    REQUIRE(run_cli(ev).code == 0);
    std::vector<std::string> ev2 = ev;
    ev2.back() = (dir / "ev2").string();
    REQUIRE(run_cli(ev2).code == 0);
    for (const char* f : {"eval.csv", "simmat.csv", "gaps.csv", "retrieval.csv", "embeddings_neural.f32",
                          "embeddings_visual.json"}) {
        CAPTURE(f);
        CHECK(fs::exists(dir / "ev1" / f));
        CHECK(read_bytes(dir / "ev1" / f) == read_bytes(dir / "ev2" / f));
    }

    const Captured an = run_cli({"analyze", "--history", (dir / "run" / "history.json").string(), "--history",
                                 (dir / "run2" / "history.json").string(), "--out", (dir / "an").string()});
    CHECK(an.code == 0);
    const auto analysis = nlohmann::json::parse(read_bytes(dir / "an" / "analysis.json"));
    CHECK(analysis.at("runs").size() == 2);
    // Identical runs: the inter-run correlation is undefined and reported as such.
    CHECK(analysis.contains("inter_error"));
}

TEST_CASE("config file values apply and flags win") {
    const fs::path dir = scratch_dir("cli_config");
    REQUIRE(run_cli(small_synth(dir / "pack")).code == 0);
    {
        std::ofstream cfg(dir / "run.toml");
        cfg << "[train]\nepochs = 2\nbatch = 8\nd-joint = 4\nmode = \"joint_con\"\n";
    }
    REQUIRE(run_cli({"--config", (dir / "run.toml").string(), "train", "--pack", (dir / "pack").string(), "--out",
                     (dir / "a").string()})
                .code == 0);
    CHECK(count_lines(read_bytes(dir / "a" / "eval.csv")) == 1 + 2);
    const auto manifest = nlohmann::json::parse(read_bytes(dir / "a" / "checkpoint" / "manifest.json"));
    CHECK(manifest.at("config").at("mode") == "joint_con");

    REQUIRE(run_cli({"--config", (dir / "run.toml").string(), "train", "--pack", (dir / "pack").string(), "--out",
                     (dir / "b").string(), "--epochs", "3"})
                .code == 0);
    CHECK(count_lines(read_bytes(dir / "b" / "eval.csv")) == 1 + 3);
}

TEST_CASE("exit codes and one-line errors") {
    const fs::path dir = scratch_dir("cli_errors");
    Captured c = run_cli({});
    CHECK(c.code == 1);
    CHECK(c.err.rfind("error kind=usage", 0) == 0);
    CHECK(count_lines(c.err) == 1);

    CHECK(run_cli({"train", "--out", (dir / "x").string()}).code == 1);
    CHECK(run_cli({"train", "--pack", "p", "--mode", "bogus"}).code == 1);

    c = run_cli({"train", "--pack", (dir / "missing").string()});
    CHECK(c.code == 2);
    CHECK(c.err.find("where=manifest") != std::string::npos);
    CHECK(count_lines(c.err) == 1);

    REQUIRE(run_cli(small_synth(dir / "pack")).code == 0);
    std::ofstream(dir / "pack" / "labels.i32", std::ios::trunc) << "xx";
    c = run_cli({"train", "--pack", (dir / "pack").string()});
    CHECK(c.code == 2);
    CHECK(c.err.find("where=labels") != std::string::npos);

    REQUIRE(run_cli(small_synth(dir / "pack")).code == 0);
    CHECK(run_cli(with(small_train(dir / "pack", dir / "run", 1), "--epochs", "0")).code == 1);

    c = run_cli(with(small_train(dir / "pack", dir / "run", 3), "--lr", "1e300"));
    CHECK(c.code == 3);
    CHECK(c.err.rfind("error kind=numerical", 0) == 0);
}
