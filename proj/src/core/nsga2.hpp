#ifndef TNCONV_CORE_NSGA2_HPP
#define TNCONV_CORE_NSGA2_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "graph.hpp"
#include "reduction.hpp"
#include "rng.hpp"

namespace tnconv {

class SearchError : public std::runtime_error {
public:
    explicit SearchError(const std::string& msg) : std::runtime_error(msg) {}
};

// GA individual: the layer structure (with rank dims and stage/activation
// flags carried by the graph) plus a contraction-order hint.
struct Genome {
    EinconvGraph graph;
    std::uint64_t order_hint = 0;
};

std::string genome_to_json(const Genome& g);
Genome genome_from_json(const std::string& text);

struct Objectives {
    double accuracy = 0;  // maximized
    double params = 0;    // minimized
    double flops = 0;     // reported, not optimized
    bool evaluated = false;
};

struct Individual {
    Genome genome;
    Objectives obj;
    int generation = 0;
    int rank = -1;
    double crowding = 0;
};

// a dominates b: no worse in both objectives, better in at least one
bool dominates(const Objectives& a, const Objectives& b);

// Deb's fast nondominated sort; returns fronts of indices and fills rank.
std::vector<std::vector<int>> fast_nondominated_sort(std::vector<Individual>& pop);

// Crowding distances for one front (indices into pop); boundaries get +inf.
std::vector<double> crowding_distance(const std::vector<Individual>& pop,
                                      const std::vector<int>& front);

// One mutation drawn uniformly from the applicable operators; the result is
// reduced to nonredundant form and revalidated, resampling up to 20 times
// and falling back to the input unchanged.
Genome mutate(const Genome& g, Rng& rng, const RuleConfig& rules = {});

// Applies one specific operator (0 add vertex, 1 remove vertex, 2 add rank,
// 3 remove rank, 4 resize rank, 5 toggle activation, 6 reshuffle order);
// nullopt when inapplicable or when the reduced result fails validation.
std::optional<Genome> try_mutation_op(const Genome& g, int op_index, Rng& rng,
                                      const RuleConfig& rules = {});

using Evaluator = std::function<Objectives(const Genome&)>;

struct SearchOptions {
    int population = 24;
    int generations = 5;
    std::uint64_t seed = 1;
    std::string out_dir;      // empty: no files written
    std::string file_header;  // leading comment line for emitted files
    bool resume = false;      // continue from out_dir's last generation
    int jobs = 1;
    RuleConfig rules;
};

struct SearchResult {
    std::vector<Individual> archive;  // every evaluated individual
    std::vector<Individual> pareto;   // nondominated subset of the archive
    int generations_run = 0;
    std::uint64_t cache_hits = 0;
};

SearchResult search(const std::vector<Genome>& initial, const Evaluator& evaluate,
                    const SearchOptions& options);

// Baseline seeds: the named constructors of the dimensionality plus uniform
// random draws from the enumeration output.
std::vector<Genome> seed_population(int count, const ConvGeometry& reference,
                                    std::uint64_t seed, const RuleConfig& rules = {});

// Evaluators. The surrogate scores accuracy = 1/(1 + params); the trainer
// evaluator builds the preset around the genome's structure and trains it
// briefly. Trainer failures score accuracy 0 rather than aborting the run.
Evaluator make_surrogate_evaluator(const ConvGeometry& reference);
Evaluator make_trainer_evaluator(const std::string& preset, std::int64_t train_samples,
                                 std::int64_t val_samples, std::int64_t epochs,
                                 std::uint64_t seed);

std::string archive_csv(const std::vector<Individual>& rows, const std::string& header);

}  // namespace tnconv

#endif
