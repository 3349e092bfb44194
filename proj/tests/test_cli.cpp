// Drives the installed CLI binary end to end; the path arrives in the
// TNCONV_CLI environment variable.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "graph.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli() {
    const char* env = std::getenv("TNCONV_CLI");
    REQUIRE(env != nullptr);
    return env;
}

struct RunResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

RunResult run(const std::string& args) {
    const std::string cmd = cli() + " " + args + " 2>&1";
    std::array<char, 4096> buf{};
    RunResult res;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    while (std::fgets(buf.data(), buf.size(), pipe)) res.output += buf.data();
    const int status = pclose(pipe);
    res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return res;
}

std::string write_standard_graph(const std::string& path) {
    tnconv::ConvGeometry geo;
    geo.spatial_in = {32, 32};
    geo.filter = {3, 3};
    geo.padding = 1;
    geo.stride = 1;
    geo.channels_in = 64;
    geo.channels_out = 64;
    auto g = tnconv::make_named(tnconv::NamedKind::Standard, geo);
    std::ofstream f(path);
    f << tnconv::graph_to_json(g) << "\n";
    return path;
}

}  // namespace

TEST_CASE("enumerate prints the count and exits cleanly") {
    auto res = run("enumerate --dims 2 --filter 1x1 --max-rank-indices 0");
    CHECK(res.exit_code == 0);
    CHECK(res.output == "1\n");
}

TEST_CASE("enumerate writes declared output files") {
    const std::string dir = "/tmp/tnconv_cli_enum";
    fs::remove_all(dir);
    auto res = run("enumerate --dims 2 --filter 3x3 --max-rank-indices 0 --out " + dir);
    CHECK(res.exit_code == 0);
    std::ifstream f(dir + "/summary.csv");
    std::string first;
    std::getline(f, first);
    CHECK(first.rfind("# tnconv 0.1.0 |", 0) == 0);
    CHECK(first.find("--max-rank-indices 0") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("enumerate over budget exits 3 with machine-parsable stderr") {
    auto res = run("enumerate --dims 2 --filter 3x3 --max-rank-indices 2 --cap 5");
    CHECK(res.exit_code == 3);
    CHECK(res.output.find("\"kind\":\"budget\"") != std::string::npos);
}

TEST_CASE("analyze reports params, flops, hash and redundancy") {
    const std::string path = "/tmp/tnconv_cli_std.json";
    write_standard_graph(path);
    auto res = run("analyze --graph " + path);
    CHECK(res.exit_code == 0);
    CHECK(res.output.find("params 36864") != std::string::npos);
    CHECK(res.output.find("flops 75497472") != std::string::npos);  // 2*3*3*64*32*32*64
    CHECK(res.output.find("redundant no") != std::string::npos);
    fs::remove(path);

    auto bad = run("analyze --graph /nonexistent.json");
    CHECK(bad.exit_code != 0);
}

TEST_CASE("reduce prints a trace for a redundant graph") {
    // bottleneck with a rank-1 inner dim reduces away both rank indices
    tnconv::ConvGeometry geo;
    geo.spatial_in = {8, 8};
    geo.filter = {3, 3};
    geo.padding = 1;
    geo.stride = 1;
    geo.channels_in = 4;
    geo.channels_out = 4;
    auto g = tnconv::make_named(tnconv::NamedKind::Bottleneck, geo, {{"a", 1}, {"b", 2}});
    const std::string path = "/tmp/tnconv_cli_red.json";
    {
        std::ofstream f(path);
        f << tnconv::graph_to_json(g) << "\n";
    }
    auto res = run("reduce --graph " + path);
    CHECK(res.exit_code == 0);
    CHECK(res.output.find("rank1") != std::string::npos);
    fs::remove(path);
}

TEST_CASE("train on the separable synthetic task reaches full accuracy") {
    const std::string cfg = "/tmp/tnconv_cli_cfg.toml";
    {
        std::ofstream f(cfg);
        f << "epochs = 12\nlearning_rate = 1e-2\nbatch_size = 8\n";
    }
    auto res = run("train --net synth-linear --data synth:separable:48:3 --config " + cfg);
    CHECK(res.exit_code == 0);
    CHECK(res.output.find("train_acc 1.0") != std::string::npos);
    fs::remove(cfg);
}

TEST_CASE("zero-epoch training writes a header-only history") {
    const std::string cfg = "/tmp/tnconv_cli_cfg0.toml";
    const std::string dir = "/tmp/tnconv_cli_train0";
    fs::remove_all(dir);
    {
        std::ofstream f(cfg);
        f << "epochs = 0\n";
    }
    auto res = run("train --net synth-linear --data synth:separable:16:1 --config " + cfg +
                   " --out " + dir);
    CHECK(res.exit_code == 0);
    std::ifstream f(dir + "/history.csv");
    std::string line;
    int data_rows = 0, lines = 0;
    while (std::getline(f, line)) {
        ++lines;
        if (!line.empty() && line[0] != '#' && line.rfind("epoch,", 0) != 0) ++data_rows;
    }
    CHECK(lines >= 2);  // comment header + column header
    CHECK(data_rows == 0);
    fs::remove(cfg);
    fs::remove_all(dir);
}

TEST_CASE("missing dataset paths fail cleanly with exit 2") {
    auto res = run("train --net synth-linear --data /nonexistent-dir");
    CHECK(res.exit_code == 2);
    CHECK(res.output.find("\"error\"") != std::string::npos);
}

TEST_CASE("divergent training exits 4") {
    const std::string cfg = "/tmp/tnconv_cli_cfgdiv.toml";
    {
        std::ofstream f(cfg);
        f << "epochs = 10\nlearning_rate = 1e300\noptimizer = \"sgd\"\n";
    }
    auto res = run("train --net synth-linear --data synth:separable:16:1 --config " + cfg);
    CHECK(res.exit_code == 4);
    CHECK(res.output.find("\"kind\":\"diverged\"") != std::string::npos);
    fs::remove(cfg);
}

TEST_CASE("search smoke runs are reproducible and resumable") {
    const std::string d1 = "/tmp/tnconv_cli_s1", d2 = "/tmp/tnconv_cli_s2";
    fs::remove_all(d1);
    fs::remove_all(d2);
    auto r1 = run("search --smoke --pop 8 --generations 2 --seed 11 --out " + d1);
    auto r2 = run("search --smoke --pop 8 --generations 2 --seed 11 --out " + d2);
    CHECK(r1.exit_code == 0);
    CHECK(r1.output == r2.output);

    auto strip_header = [](const std::string& path) {
        std::ifstream f(path);
        std::string line, out;
        while (std::getline(f, line))
            if (line.empty() || line[0] != '#') out += line + "\n";
        return out;
    };
    CHECK(strip_header(d1 + "/archive.csv") == strip_header(d2 + "/archive.csv"));

    SUBCASE("generations 0 keeps only the evaluated seeds") {
        const std::string d0 = "/tmp/tnconv_cli_s0";
        fs::remove_all(d0);
        auto r0 = run("search --smoke --pop 8 --generations 0 --seed 11 --out " + d0);
        CHECK(r0.exit_code == 0);
        std::ifstream f(d0 + "/archive.csv");
        std::string line;
        int rows = 0;
        while (std::getline(f, line))
            if (!line.empty() && line[0] != '#' && line.rfind("canonical", 0) != 0) ++rows;
        CHECK(rows <= 8);
        CHECK(rows > 0);
        fs::remove_all(d0);
    }
    SUBCASE("resume extends a finished run") {
        auto more = run("search --smoke --pop 8 --generations 4 --seed 11 --resume --out " +
                        d1);
        CHECK(more.exit_code == 0);
        CHECK(fs::exists(d1 + "/population_4.jsonl"));
    }
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("pareto filtering matches the documented example") {
    const std::string csv = "/tmp/tnconv_cli_archive.csv";
    const std::string dir = "/tmp/tnconv_cli_pareto";
    fs::remove_all(dir);
    fs::create_directories(dir);
    {
        std::ofstream f(csv);
        f << "canonical_hash,params,flops,accuracy,generation,front_rank\n";
        f << "aaaa,100,0,0.9,0,0\n";
        f << "bbbb,50,0,0.8,0,0\n";
        f << "cccc,200,0,0.7,0,1\n";
    }
    auto res = run("pareto --archive " + csv + " --out " + dir);
    CHECK(res.exit_code == 0);
    CHECK(res.output.find("aaaa") != std::string::npos);
    CHECK(res.output.find("bbbb") != std::string::npos);
    CHECK(res.output.find("cccc") == std::string::npos);
    CHECK(res.output.find("kept 2 of 3") != std::string::npos);
    std::ifstream tsv(dir + "/pareto.tsv");
    std::string line;
    int rows = 0;
    while (std::getline(tsv, line))
        if (!line.empty() && line[0] != '#') ++rows;
    CHECK(rows == 2);

    SUBCASE("single row keeps itself; empty input stays empty") {
        {
            std::ofstream f(csv);
            f << "canonical_hash,params,flops,accuracy,generation,front_rank\n";
            f << "aaaa,100,0,0.9,0,0\n";
        }
        auto one = run("pareto --archive " + csv + " --out " + dir);
        CHECK(one.output.find("kept 1 of 1") != std::string::npos);
        {
            std::ofstream f(csv);
            f << "canonical_hash,params,flops,accuracy,generation,front_rank\n";
        }
        auto none = run("pareto --archive " + csv + " --out " + dir);
        CHECK(none.output.find("kept 0 of 0") != std::string::npos);
    }
    fs::remove(csv);
    fs::remove_all(dir);
}
