#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "assign_surrogate/demand_paths.hpp"

namespace surrogate {

/// Point on the K-simplex with components numerators[k] / resolution.
/// Components sum to exactly one in integer arithmetic.
struct SimplexPoint {
    std::vector<int> numerators;
    int resolution = 1;

    std::size_t size() const { return numerators.size(); }
    double probability(std::size_t k) const { return static_cast<double>(numerators[k]) / resolution; }
    bool operator==(const SimplexPoint&) const = default;
};

/// All compositions of g into K nonnegative parts, C(g+K-1, K-1) of them, in
/// descending lexicographic order of numerators (vertex e_1 first).
std::vector<SimplexPoint> grid_points(std::size_t k, int g);

/// Binomial coefficient, exact for the small arguments used here.
std::uint64_t binomial(std::uint64_t n, std::uint64_t r);

/// What to do for an agent whose valid ranks carry zero probability under p.
enum class ZeroMass {
    Error,           // throw ValidationError naming the agent
    UniformOverValid // draw uniformly among the agent's valid ranks
};

/// Per agent, draws a rank from p restricted to that agent's valid ranks and
/// renormalised.
Assignment sample_assignment(const ChoiceSets& sets, const SimplexPoint& p, std::uint64_t seed,
                             ZeroMass policy = ZeroMass::Error);

/// Uniform over each agent's valid ranks.
Assignment random_assignment(const ChoiceSets& sets, std::uint64_t seed);

/// One row of the sampling manifest.
struct SampleSpec {
    std::size_t sample_id = 0;
    std::size_t grid_index = 0;
    SimplexPoint point;
    std::uint64_t seed = 0;
};

/// `count` samples spread evenly over the grid (stride |grid| / count). When
/// count exceeds the grid size, the grid is cycled and later passes get fresh
/// seeds. seed = derive_seed(base_seed, grid_index + pass * |grid|).
std::vector<SampleSpec> plan_grid_samples(std::size_t k, int g, std::size_t count, std::uint64_t base_seed);

/// CSV: sample_id,grid_index,p_0..p_{K-1},seed
void save_sampling_manifest(const std::vector<SampleSpec>& specs, const std::filesystem::path& file);
std::vector<SampleSpec> load_sampling_manifest(const std::filesystem::path& file, int resolution);

}  // namespace surrogate
