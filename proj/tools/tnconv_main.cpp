// tnconv command line: enumerate, analyze, reduce, train, search, pareto.
// Links the shared C API only.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "tnconv/tnconv.h"

namespace {

int exit_code_for(tnconv_status_t status) {
    switch (status) {
        case TNCONV_OK: return 0;
        case TNCONV_ERR_BUDGET: return 3;
        case TNCONV_ERR_DIVERGED: return 4;
        default: return 2;
    }
}

const char* status_kind(tnconv_status_t status) {
    switch (status) {
        case TNCONV_OK: return "ok";
        case TNCONV_ERR_INVALID: return "invalid";
        case TNCONV_ERR_VALIDATION: return "validation";
        case TNCONV_ERR_BUDGET: return "budget";
        case TNCONV_ERR_DIVERGED: return "diverged";
        case TNCONV_ERR_IO: return "io";
    }
    return "unknown";
}

std::string json_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        if (c == '\n') {
            out += "\\n";
            continue;
        }
        out += c;
    }
    return out;
}

int report_failure(tnconv_status_t status) {
    std::fprintf(stderr, "{\"error\":{\"code\":%d,\"kind\":\"%s\",\"message\":\"%s\"}}\n",
                 exit_code_for(status), status_kind(status),
                 json_escape(tnconv_last_error()).c_str());
    return exit_code_for(status);
}

std::string read_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw CLI::ValidationError("cannot read " + path);
    std::ostringstream out;
    out << f.rdbuf();
    return out.str();
}

bool file_exists(const std::string& path) {
    std::ifstream f(path);
    return static_cast<bool>(f);
}

std::string make_header(int argc, char** argv) {
    std::string header = std::string("tnconv ") + tnconv_version() + " |";
    for (int a = 0; a < argc; ++a) header += std::string(" ") + argv[a];
    return header;
}

struct OwnedString {
    char* ptr = nullptr;
    ~OwnedString() { tnconv_string_free(ptr); }
    std::string str() const { return ptr ? ptr : ""; }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tensor-network convolution toolkit"};
    app.require_subcommand(1);
    const std::string header = make_header(argc, argv);

    // enumerate
    auto* enumerate = app.add_subcommand("enumerate", "enumerate nonredundant decompositions");
    int dims = 2, max_rank = 2, rank_dim = 2, jobs = 0;
    std::string filter = "3x3", geometry, out_dir;
    std::uint64_t cap = 0;
    bool variant_report = false;
    enumerate->add_option("--dims", dims, "spatial dimensionality (2 or 3)");
    enumerate->add_option("--filter", filter, "filter sizes, e.g. 3x3 or 3x3x3");
    enumerate->add_option("--max-rank-indices", max_rank, "rank-index budget");
    enumerate->add_option("--rank-dim", rank_dim, "uniform rank dimension");
    enumerate->add_option("--geometry", geometry, "reference geometry for params/flops");
    enumerate->add_option("--cap", cap, "candidate cap (overflow aborts)");
    enumerate->add_option("--jobs", jobs, "worker parallelism");
    enumerate->add_option("--out", out_dir, "output directory (graphs.jsonl, summary.csv)");
    enumerate->add_flag("--variant-report", variant_report,
                        "print counts under every redundancy-rule interpretation");

    // analyze
    auto* analyze = app.add_subcommand("analyze", "params, flops and redundancy of a graph");
    std::string graph_path, analyze_geometry;
    analyze->add_option("--graph", graph_path, "graph JSON file")->required();
    analyze->add_option("--geometry", analyze_geometry, "override geometry");

    // reduce
    auto* reduce = app.add_subcommand("reduce", "apply the redundancy rewrites to a fixpoint");
    std::string reduce_graph, reduce_out;
    reduce->add_option("--graph", reduce_graph, "graph JSON file")->required();
    reduce->add_option("--out", reduce_out, "write the reduced graph here");

    // train
    auto* train = app.add_subcommand("train", "train a network on an IDX dataset");
    std::string net = "lenet-mini", data, train_graph, config_path, train_out;
    std::int64_t take = 0, test_take = 0;
    train->add_option("--net", net, "preset name or network spec file");
    train->add_option("--data", data, "dataset directory or synth:...")->required();
    train->add_option("--graph", train_graph, "layer structure JSON for einconv blocks");
    train->add_option("--config", config_path, "TOML training config");
    std::int64_t train_epochs = -1;
    std::uint64_t train_seed = 0;
    bool train_seed_set = false, train_epochs_set = false;
    train->add_option("--epochs", train_epochs, "override the config epoch count")
        ->each([&train_epochs_set](const std::string&) { train_epochs_set = true; });
    train->add_option("--seed", train_seed, "override the config seed")
        ->each([&train_seed_set](const std::string&) { train_seed_set = true; });
    train->add_option("--take", take, "train on the first N samples");
    train->add_option("--test-take", test_take, "evaluate on the first N test samples");
    train->add_option("--out", train_out, "output directory (history.csv, checkpoint.tnn)");

    // search
    auto* search = app.add_subcommand("search", "mutation-only NSGA-II over layer structures");
    std::string preset = "lenet-mini", search_out, search_data;
    int pop = 24, generations = 5, search_jobs = 0;
    std::uint64_t seed = 1;
    std::int64_t train_samples = 0, val_samples = 0, epochs_per_eval = 0;
    bool smoke = false, resume = false;
    search->add_option("--preset", preset, "trainer preset evaluated per genome");
    search->add_option("--pop", pop, "population size");
    search->add_option("--generations", generations, "generation count");
    search->add_option("--seed", seed, "rng seed");
    search->add_option("--jobs", search_jobs, "parallel evaluations");
    search->add_option("--data", search_data, "IDX dataset directory for evaluation");
    search->add_option("--train-samples", train_samples, "evaluation training subset");
    search->add_option("--val-samples", val_samples, "evaluation validation subset");
    search->add_option("--epochs-per-eval", epochs_per_eval, "epochs per evaluation");
    search->add_flag("--smoke", smoke, "surrogate objectives instead of training");
    search->add_flag("--resume", resume, "continue from the output directory");
    search->add_option("--out", search_out, "output directory")->required();

    // pareto
    auto* pareto = app.add_subcommand("pareto", "nondominated subset of an archive CSV");
    std::string archive_path, pareto_out = ".";
    pareto->add_option("--archive", archive_path, "archive CSV")->required();
    pareto->add_option("--out", pareto_out, "output directory for pareto.csv/pareto.tsv");

    CLI11_PARSE(app, argc, argv);

    if (enumerate->parsed()) {
        if (variant_report) {
            OwnedString report;
            auto status = tnconv_enumerate_variant_report(dims, filter.c_str(), max_rank,
                                                          rank_dim, &report.ptr);
            if (status != TNCONV_OK) return report_failure(status);
            std::fputs(report.str().c_str(), stdout);
            return 0;
        }
        std::uint64_t count = 0;
        auto status = tnconv_enumerate(dims, filter.c_str(), max_rank, rank_dim,
                                       geometry.empty() ? nullptr : geometry.c_str(), cap,
                                       jobs, out_dir.empty() ? nullptr : out_dir.c_str(),
                                       header.c_str(), &count);
        if (status != TNCONV_OK) return report_failure(status);
        std::printf("%llu\n", static_cast<unsigned long long>(count));
        return 0;
    }

    if (analyze->parsed()) {
        tnconv_graph_t* g = nullptr;
        auto status = tnconv_graph_parse(read_file(graph_path).c_str(), &g);
        if (status != TNCONV_OK) return report_failure(status);
        if (!analyze_geometry.empty()) {
            tnconv_graph_t* reshaped = nullptr;
            status = tnconv_graph_with_geometry(g, analyze_geometry.c_str(), &reshaped);
            tnconv_graph_free(g);
            if (status != TNCONV_OK) return report_failure(status);
            g = reshaped;
        }
        OwnedString violations;
        status = tnconv_graph_validate(g, &violations.ptr);
        if (status != TNCONV_OK || !violations.str().empty()) {
            tnconv_graph_free(g);
            if (status == TNCONV_OK) {
                std::fprintf(stderr,
                             "{\"error\":{\"code\":2,\"kind\":\"validation\",\"message\":\"%s\"}}\n",
                             json_escape(violations.str()).c_str());
                return 2;
            }
            return report_failure(status);
        }
        std::int64_t params = 0;
        std::uint64_t flops = 0;
        status = tnconv_graph_complexity(g, &params, &flops);
        if (status != TNCONV_OK) {
            tnconv_graph_free(g);
            return report_failure(status);
        }
        OwnedString hash;
        tnconv_graph_canonical_hash(g, &hash.ptr);
        std::printf("params %lld\nflops %llu\ncanonical_hash %s\n",
                    static_cast<long long>(params), static_cast<unsigned long long>(flops),
                    hash.str().c_str());
        const int nonredundant = tnconv_graph_is_nonredundant(g);
        if (nonredundant == 0) {
            OwnedString trace;
            tnconv_graph_t* reduced = nullptr;
            tnconv_graph_reduce(g, &reduced, &trace.ptr);
            std::printf("redundant yes\n");
            if (!trace.str().empty()) std::printf("%s\n", trace.str().c_str());
            tnconv_graph_free(reduced);
        } else {
            std::printf("redundant no\n");
        }
        tnconv_graph_free(g);
        return 0;
    }

    if (reduce->parsed()) {
        tnconv_graph_t* g = nullptr;
        auto status = tnconv_graph_parse(read_file(reduce_graph).c_str(), &g);
        if (status != TNCONV_OK) return report_failure(status);
        tnconv_graph_t* reduced = nullptr;
        OwnedString trace;
        status = tnconv_graph_reduce(g, &reduced, &trace.ptr);
        tnconv_graph_free(g);
        if (status != TNCONV_OK) return report_failure(status);
        OwnedString out_json;
        tnconv_graph_to_json(reduced, 0, &out_json.ptr);
        tnconv_graph_free(reduced);
        if (!trace.str().empty()) std::fprintf(stdout, "%s\n", trace.str().c_str());
        if (reduce_out.empty()) {
            std::printf("%s\n", out_json.str().c_str());
        } else {
            std::ofstream f(reduce_out);
            f << out_json.str() << "\n";
        }
        return 0;
    }

    if (train->parsed()) {
        std::string net_arg = file_exists(net) ? read_file(net) : net;
        std::string graph_json = train_graph.empty() ? "" : read_file(train_graph);
        std::string config = config_path.empty() ? "" : read_file(config_path);
        if (train_epochs_set) config += "\nepochs = " + std::to_string(train_epochs) + "\n";
        if (train_seed_set) config += "\nseed = " + std::to_string(train_seed) + "\n";
        std::string train_images = data, train_labels, test_images, test_labels;
        if (data.rfind("synth:", 0) != 0) {
            train_images = data + "/train-images-idx3-ubyte";
            train_labels = data + "/train-labels-idx1-ubyte";
            test_images = data + "/t10k-images-idx3-ubyte";
            test_labels = data + "/t10k-labels-idx1-ubyte";
            if (!file_exists(test_images)) test_images.clear();
        }
        double train_acc = 0, test_acc = 0;
        auto status = tnconv_train(
            net_arg.c_str(), graph_json.empty() ? nullptr : graph_json.c_str(),
            train_images.c_str(), train_labels.empty() ? nullptr : train_labels.c_str(),
            test_images.empty() ? nullptr : test_images.c_str(),
            test_labels.empty() ? nullptr : test_labels.c_str(), take, test_take,
            config.empty() ? nullptr : config.c_str(),
            train_out.empty() ? nullptr : train_out.c_str(), header.c_str(), &train_acc,
            &test_acc);
        if (status != TNCONV_OK) return report_failure(status);
        std::printf("train_acc %.6f\n", train_acc);
        if (!test_images.empty()) std::printf("test_acc %.6f\n", test_acc);
        return 0;
    }

    if (search->parsed()) {
        std::string train_images, train_labels;
        if (!search_data.empty()) {
            if (search_data.rfind("synth:", 0) == 0) {
                train_images = search_data;
            } else {
                train_images = search_data + "/train-images-idx3-ubyte";
                train_labels = search_data + "/train-labels-idx1-ubyte";
            }
        }
        std::uint64_t archive_size = 0;
        auto status = tnconv_search(
            preset.c_str(), pop, generations, seed, search_jobs, smoke ? 1 : 0,
            resume ? 1 : 0, train_images.empty() ? nullptr : train_images.c_str(),
            train_labels.empty() ? nullptr : train_labels.c_str(), train_samples,
            val_samples, epochs_per_eval, search_out.c_str(), header.c_str(),
            &archive_size);
        if (status != TNCONV_OK) return report_failure(status);
        std::printf("archive %llu\n", static_cast<unsigned long long>(archive_size));
        return 0;
    }

    if (pareto->parsed()) {
        std::ifstream f(archive_path);
        if (!f) {
            std::fprintf(stderr,
                         "{\"error\":{\"code\":2,\"kind\":\"io\",\"message\":\"cannot read %s\"}}\n",
                         json_escape(archive_path).c_str());
            return 2;
        }
        std::vector<std::string> rows;
        std::vector<double> acc, params;
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty() || line[0] == '#') continue;
            if (line.rfind("canonical_hash", 0) == 0) continue;
            std::vector<std::string> cols;
            std::stringstream ss(line);
            std::string col;
            while (std::getline(ss, col, ',')) cols.push_back(col);
            if (cols.size() < 4) continue;
            rows.push_back(line);
            params.push_back(std::stod(cols[1]));
            acc.push_back(std::stod(cols[3]));
        }
        std::vector<int> keep(rows.size(), 0);
        auto status = tnconv_pareto_filter(acc.data(), params.data(), rows.size(),
                                           keep.data());
        if (status != TNCONV_OK) return report_failure(status);
        std::ofstream csv(pareto_out + "/pareto.csv");
        std::ofstream tsv(pareto_out + "/pareto.tsv");
        csv << "# " << header << "\n";
        csv << "canonical_hash,params,flops,accuracy,generation,front_rank\n";
        tsv << "# " << header << "\n";
        std::size_t kept = 0;
        for (std::size_t q = 0; q < rows.size(); ++q) {
            if (!keep[q]) continue;
            ++kept;
            std::printf("%s\n", rows[q].c_str());
            csv << rows[q] << "\n";
            tsv << params[q] << "\t" << acc[q] << "\n";
        }
        std::fprintf(stderr, "kept %zu of %zu\n", kept, rows.size());
        return 0;
    }

    return 0;
}
