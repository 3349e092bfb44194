#include "tnconv/tnconv.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "enumeration.hpp"
#include "graph.hpp"
#include "layer.hpp"
#include "network.hpp"
#include "nsga2.hpp"
#include "reduction.hpp"
#include "trainer.hpp"

namespace fs = std::filesystem;
using namespace tnconv;

struct tnconv_graph_t {
    EinconvGraph graph;
};

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

tnconv_status_t fail(tnconv_status_t code, const std::string& msg) {
    g_last_error = msg;
    return code;
}

// Exceptions map onto the exit-code contract: validation 2, budget 3,
// divergence 4; IO and config problems surface as their own codes.
template <typename Fn>
tnconv_status_t guarded(Fn&& fn) {
    try {
        fn();
        return TNCONV_OK;
    } catch (const BudgetError& e) {
        return fail(TNCONV_ERR_BUDGET, e.what());
    } catch (const TrainerError& e) {
        switch (e.kind) {
            case TrainerError::Kind::Diverged: return fail(TNCONV_ERR_DIVERGED, e.what());
            case TrainerError::Kind::Io: return fail(TNCONV_ERR_IO, e.what());
            default: return fail(TNCONV_ERR_INVALID, e.what());
        }
    } catch (const GraphError& e) {
        return fail(TNCONV_ERR_VALIDATION, e.what());
    } catch (const NetworkError& e) {
        return fail(TNCONV_ERR_VALIDATION, e.what());
    } catch (const EinsumError& e) {
        return fail(TNCONV_ERR_VALIDATION, e.what());
    } catch (const SearchError& e) {
        return fail(TNCONV_ERR_INVALID, e.what());
    } catch (const std::exception& e) {
        return fail(TNCONV_ERR_INVALID, e.what());
    }
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::vector<std::int64_t> parse_dims(const std::string& s) {
    std::vector<std::int64_t> out;
    for (const auto& part : split(s, 'x')) out.push_back(std::stoll(part));
    return out;
}

// "in=32x32,c=16,cout=16,filter=3x3,stride=1,pad=1"
ConvGeometry parse_geometry(const std::string& text) {
    ConvGeometry geo;
    bool have_pad = false;
    for (const auto& kv : split(text, ',')) {
        if (kv.empty()) continue;
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw GraphError("bad geometry field: " + kv);
        const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
        if (key == "in") geo.spatial_in = parse_dims(val);
        else if (key == "filter") geo.filter = parse_dims(val);
        else if (key == "c") geo.channels_in = std::stoll(val);
        else if (key == "cout") geo.channels_out = std::stoll(val);
        else if (key == "stride") geo.stride = std::stoll(val);
        else if (key == "pad") { geo.padding = std::stoll(val); have_pad = true; }
        else throw GraphError("unknown geometry field: " + key);
    }
    if (geo.filter.empty()) geo.filter.assign(geo.spatial_in.size(), 3);
    if (!have_pad) {
        std::int64_t f = 1;
        for (auto v : geo.filter) f = std::max(f, v);
        geo.padding = (f - 1) / 2;
    }
    geo.check();
    return geo;
}

std::map<std::string, std::int64_t> parse_ranks(const std::string& text) {
    std::map<std::string, std::int64_t> out;
    if (text.empty()) return out;
    for (const auto& kv : split(text, ',')) {
        if (kv.empty()) continue;
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw GraphError("bad rank argument: " + kv);
        out[kv.substr(0, eq)] = std::stoll(kv.substr(eq + 1));
    }
    return out;
}

// "synth:separable:N:SEED" | "synth:blobs:N:SIDE:K:SEED" | IDX path pair
Dataset resolve_dataset(const std::string& images, const std::string& labels) {
    if (images.rfind("synth:", 0) == 0) {
        const auto parts = split(images, ':');
        auto arg = [&parts](std::size_t q, std::int64_t fallback) {
            return parts.size() > q && !parts[q].empty() ? std::stoll(parts[q]) : fallback;
        };
        if (parts.size() >= 2 && parts[1] == "separable")
            return make_separable_dataset(arg(2, 64), static_cast<std::uint64_t>(arg(3, 1)));
        if (parts.size() >= 2 && parts[1] == "blobs")
            return make_blob_dataset(arg(2, 256), arg(3, 12), static_cast<int>(arg(4, 4)),
                                     static_cast<std::uint64_t>(arg(5, 1)));
        throw TrainerError(TrainerError::Kind::Config, "unknown synthetic dataset: " + images);
    }
    return load_idx(images, labels);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw TrainerError(TrainerError::Kind::Io, "cannot write " + path);
    f << text;
}

}  // namespace

extern "C" {

const char* tnconv_version(void) { return "0.1.0"; }

const char* tnconv_last_error(void) { return g_last_error.c_str(); }

void tnconv_string_free(char* s) { std::free(s); }

tnconv_status_t tnconv_graph_parse(const char* json, tnconv_graph_t** out) {
    if (!json || !out) return fail(TNCONV_ERR_INVALID, "null argument");
    return guarded([&] {
        auto g = graph_from_json(json);
        *out = new tnconv_graph_t{std::move(g)};
    });
}

tnconv_status_t tnconv_graph_named(const char* kind, const char* geometry, const char* ranks,
                                   tnconv_graph_t** out) {
    if (!kind || !geometry || !out) return fail(TNCONV_ERR_INVALID, "null argument");
    return guarded([&] {
        auto g = make_named(named_kind_from_name(kind), parse_geometry(geometry),
                            parse_ranks(ranks ? ranks : ""));
        *out = new tnconv_graph_t{std::move(g)};
    });
}

tnconv_status_t tnconv_graph_to_json(const tnconv_graph_t* g, int pretty, char** out) {
    if (!g || !out) return fail(TNCONV_ERR_INVALID, "null argument");
    return guarded([&] { *out = dup_string(graph_to_json(g->graph, pretty != 0)); });
}

tnconv_status_t tnconv_graph_with_geometry(const tnconv_graph_t* g, const char* geometry,
                                           tnconv_graph_t** out) {
    if (!g || !geometry || !out) return fail(TNCONV_ERR_INVALID, "null argument");
    return guarded([&] {
        auto reshaped = reshape_graph_geometry(g->graph, parse_geometry(geometry));
        *out = new tnconv_graph_t{std::move(reshaped)};
    });
}

tnconv_status_t tnconv_graph_canonical_hash(const tnconv_graph_t* g, char** out) {
    if (!g || !out) return fail(TNCONV_ERR_INVALID, "null argument");
    return guarded([&] { *out = dup_string(canonical_hash_hex(g->graph)); });
}

tnconv_status_t tnconv_graph_validate(const tnconv_graph_t* g, char** violations) {
    if (!g || !violations) return fail(TNCONV_ERR_INVALID, "null argument");
    return guarded([&] {
        std::string joined;
        for (const auto& v : validate(g->graph)) {
            if (!joined.empty()) joined += "\n";
            joined += v;
        }
        *violations = dup_string(joined);
    });
}

int tnconv_graph_is_nonredundant(const tnconv_graph_t* g) {
    if (!g) {
        fail(TNCONV_ERR_INVALID, "null argument");
        return -1;
    }
    try {
        return is_nonredundant(g->graph) ? 1 : 0;
    } catch (const std::exception& e) {
        fail(TNCONV_ERR_INVALID, e.what());
        return -1;
    }
}

tnconv_status_t tnconv_graph_reduce(const tnconv_graph_t* g, tnconv_graph_t** reduced,
                                    char** trace) {
    if (!g || !reduced) return fail(TNCONV_ERR_INVALID, "null argument");
    return guarded([&] {
        auto result = reduce_to_fixpoint(g->graph);
        *reduced = new tnconv_graph_t{result.result};
        if (trace) {
            std::string lines;
            for (const auto& step : result.steps) {
                if (!lines.empty()) lines += "\n";
                lines += std::string(reduction_rule_name(step.rule)) + ": " + step.detail;
            }
            *trace = dup_string(lines);
        }
    });
}

tnconv_status_t tnconv_graph_complexity(const tnconv_graph_t* g, int64_t* params,
                                        uint64_t* flops) {
    if (!g || !params || !flops) return fail(TNCONV_ERR_INVALID, "null argument");
    return guarded([&] {
        auto layer = init_params(g->graph, 1);
        auto c = complexity(layer);
        *params = c.param_count;
        *flops = c.flops;
    });
}

void tnconv_graph_free(tnconv_graph_t* g) { delete g; }

tnconv_status_t tnconv_enumerate(int spatial_dims, const char* filter, int max_rank_indices,
                                 int rank_dim, const char* geometry, uint64_t candidate_cap,
                                 int jobs, const char* out_dir, const char* file_header,
                                 uint64_t* count) {
    if (!filter || !count) return fail(TNCONV_ERR_INVALID, "null argument");
    return guarded([&] {
        EnumOptions opts;
        if (rank_dim > 0) opts.rank_dim = rank_dim;
        if (candidate_cap > 0) opts.candidate_cap = candidate_cap;
        if (jobs > 0) opts.jobs = jobs;
        if (spatial_dims == 3) {
            opts.spatial_extent = 16;
            opts.channels_in = 8;
            opts.channels_out = 8;
        }
        if (geometry && *geometry) {
            const ConvGeometry geo = parse_geometry(geometry);
            opts.spatial_extent = geo.spatial_in[0];
            opts.channels_in = geo.channels_in;
            opts.channels_out = geo.channels_out;
            opts.stride = geo.stride;
            opts.padding = geo.padding;
        }
        std::vector<int> fdims;
        for (auto v : parse_dims(filter)) fdims.push_back(static_cast<int>(v));
        auto res = enumerate_graphs(spatial_dims, fdims, max_rank_indices, opts);
        *count = res.graphs.size();

        if (out_dir && *out_dir) {
            fs::create_directories(out_dir);
            const std::string header = file_header ? file_header : "";
            std::ostringstream graphs;
            if (!header.empty()) graphs << "# " << header << "\n";
            for (const auto& g : res.graphs) graphs << graph_to_json(g) << "\n";
            write_text(std::string(out_dir) + "/graphs.jsonl", graphs.str());

            std::ostringstream csv;
            if (!header.empty()) csv << "# " << header << "\n";
            csv << "canonical_hash,n_vertices,n_rank_indices,params,flops\n";
            for (const auto& g : res.graphs) {
                auto layer = init_params(g, 1);
                auto c = complexity(layer);
                csv << canonical_hash_hex(g) << "," << g.vertices.size() << ","
                    << g.rank_labels().size() << "," << c.param_count << "," << c.flops
                    << "\n";
            }
            write_text(std::string(out_dir) + "/summary.csv", csv.str());
        }
    });
}

tnconv_status_t tnconv_enumerate_variant_report(int spatial_dims, const char* filter,
                                                int max_rank_indices, int rank_dim,
                                                char** report) {
    if (!filter || !report) return fail(TNCONV_ERR_INVALID, "null argument");
    return guarded([&] {
        EnumOptions opts;
        if (rank_dim > 0) opts.rank_dim = rank_dim;
        if (spatial_dims == 3) {
            opts.spatial_extent = 16;
            opts.channels_in = 8;
            opts.channels_out = 8;
        }
        std::vector<int> fdims;
        for (auto v : parse_dims(filter)) fdims.push_back(static_cast<int>(v));
        auto rows = enumeration_variant_report(spatial_dims, fdims, max_rank_indices, opts);
        std::ostringstream out;
        out << "subset_against_fixed,require_channel_on_parameter,total,by_rank_indices\n";
        for (const auto& vc : rows) {
            out << (vc.rules.subset_against_fixed ? 1 : 0) << ","
                << (vc.rules.require_channel_on_parameter ? 1 : 0) << "," << vc.total << ",";
            bool first = true;
            for (const auto& [k, n] : vc.by_rank_indices) {
                if (!first) out << "+";
                out << k << ":" << n;
                first = false;
            }
            out << "\n";
        }
        *report = dup_string(out.str());
    });
}

tnconv_status_t tnconv_train(const char* net, const char* graph_json,
                             const char* train_images, const char* train_labels,
                             const char* test_images, const char* test_labels, int64_t take,
                             int64_t test_take, const char* config_toml, const char* out_dir,
                             const char* file_header, double* final_train_acc,
                             double* final_test_acc) {
    if (!net || !train_images) return fail(TNCONV_ERR_INVALID, "null argument");
    return guarded([&] {
        NetworkSpec spec;
        const std::string net_text = net;
        std::optional<EinconvGraph> graph;
        if (graph_json && *graph_json) graph = graph_from_json(graph_json);
        if (net_text.find('\n') == std::string::npos) {
            spec = graph.has_value() ? make_preset_with_graph(net_text, *graph)
                                     : make_preset(net_text);
        } else {
            spec = NetworkSpec::parse(net_text);
            if (graph.has_value())
                for (auto& b : spec.blocks)
                    if (b.kind == BlockKind::Einconv) b.einconv.graph = graph;
        }

        Dataset train_set = resolve_dataset(train_images, train_labels ? train_labels : "");
        if (take > 0 && take < train_set.size()) train_set = train_set.slice(0, take);
        std::optional<Dataset> test_set;
        if (test_images && *test_images) {
            test_set = resolve_dataset(test_images, test_labels ? test_labels : "");
            if (test_take > 0 && test_take < test_set->size())
                test_set = test_set->slice(0, test_take);
        }

        TrainConfig cfg =
            config_toml && *config_toml ? parse_train_config(config_toml) : TrainConfig{};
        auto result = train(spec, train_set, test_set, cfg);

        if (final_train_acc)
            *final_train_acc =
                result.history.empty() ? 0.0 : result.history.back().train_acc;
        if (final_test_acc)
            *final_test_acc = result.history.empty() || !test_set.has_value()
                                  ? 0.0
                                  : result.history.back().test_acc;

        if (out_dir && *out_dir) {
            fs::create_directories(out_dir);
            std::ostringstream csv;
            if (file_header && *file_header) csv << "# " << file_header << "\n";
            csv << "epoch,loss,train_acc,test_acc,seconds\n";
            for (const auto& st : result.history)
                csv << st.epoch << "," << st.loss << "," << st.train_acc << ","
                    << st.test_acc << "," << st.seconds << "\n";
            write_text(std::string(out_dir) + "/history.csv", csv.str());
            save_network(result.net, std::string(out_dir) + "/checkpoint.tnn");
        }
    });
}

tnconv_status_t tnconv_search(const char* preset, int population, int generations,
                              uint64_t seed, int jobs, int surrogate, int resume,
                              const char* train_images, const char* train_labels,
                              int64_t train_samples, int64_t val_samples,
                              int64_t epochs_per_eval, const char* out_dir,
                              const char* file_header, uint64_t* archive_size) {
    if (!preset) return fail(TNCONV_ERR_INVALID, "null argument");
    return guarded([&] {
        ConvGeometry reference;
        reference.spatial_in = {12, 12};
        reference.filter = {3, 3};
        reference.padding = 1;
        reference.stride = 1;
        reference.channels_in = 4;
        reference.channels_out = 4;

        auto seeds = seed_population(std::max(population, 8), reference, seed);
        Evaluator evaluator;
        if (surrogate) {
            evaluator = make_surrogate_evaluator(reference);
        } else if (train_images && *train_images) {
            auto train_set = std::make_shared<Dataset>(
                resolve_dataset(train_images, train_labels ? train_labels : ""));
            if (train_samples > 0 && train_samples + val_samples <= train_set->size()) {
                auto tr = std::make_shared<Dataset>(train_set->slice(0, train_samples));
                auto va = std::make_shared<Dataset>(
                    train_set->slice(train_samples, val_samples));
                train_set = tr;
                const std::string preset_name = preset;
                const std::int64_t epochs = epochs_per_eval > 0 ? epochs_per_eval : 3;
                evaluator = [preset_name, tr, va, epochs, seed](const Genome& g) {
                    auto spec = make_preset_with_graph(preset_name, g.graph);
                    TrainConfig cfg;
                    cfg.learning_rate = 1e-3;
                    cfg.batch_size = 16;
                    cfg.epochs = epochs;
                    cfg.seed = seed;
                    auto trained = train(spec, *tr, std::nullopt, cfg);
                    Objectives obj;
                    obj.accuracy = evaluate(trained.net, *va);
                    obj.params = static_cast<double>(trained.net.parameter_count());
                    std::uint64_t flops = 0;
                    for (const auto& layer : trained.net.layers)
                        flops += complexity(layer).flops;
                    obj.flops = static_cast<double>(flops);
                    obj.evaluated = true;
                    return obj;
                };
            } else {
                throw TrainerError(TrainerError::Kind::Config,
                                   "dataset too small for the requested split");
            }
        } else {
            evaluator = make_trainer_evaluator(preset, train_samples > 0 ? train_samples : 192,
                                               val_samples > 0 ? val_samples : 96,
                                               epochs_per_eval > 0 ? epochs_per_eval : 3,
                                               seed);
        }

        SearchOptions opt;
        opt.population = population;
        opt.generations = generations;
        opt.seed = seed;
        opt.jobs = jobs > 0 ? jobs : 1;
        opt.resume = resume != 0;
        if (out_dir) opt.out_dir = out_dir;
        if (file_header) opt.file_header = file_header;
        auto res = search(seeds, evaluator, opt);
        if (archive_size) *archive_size = res.archive.size();
    });
}

tnconv_status_t tnconv_pareto_filter(const double* accuracy, const double* params, size_t n,
                                     int* keep) {
    if ((!accuracy || !params || !keep) && n > 0)
        return fail(TNCONV_ERR_INVALID, "null argument");
    for (size_t a = 0; a < n; ++a) {
        keep[a] = 1;
        for (size_t b = 0; b < n && keep[a]; ++b) {
            if (a == b) continue;
            const bool no_worse = accuracy[b] >= accuracy[a] && params[b] <= params[a];
            const bool better = accuracy[b] > accuracy[a] || params[b] < params[a];
            if (no_worse && better) keep[a] = 0;
        }
    }
    return TNCONV_OK;
}

}  // extern "C"
