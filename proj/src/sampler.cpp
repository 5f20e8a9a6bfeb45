#include "assign_surrogate/sampler.hpp"

#include <cmath>
#include <sstream>

#include "assign_surrogate/csv.hpp"
#include "assign_surrogate/error.hpp"
#include "assign_surrogate/rng.hpp"

namespace surrogate {

namespace {

std::vector<int> valid_ranks(const ChoiceSet& cs) {
    std::vector<int> out;
    for (std::size_t k = 0; k < cs.valid_mask.size(); ++k) {
        if (cs.valid_mask[k]) out.push_back(static_cast<int>(k));
    }
    return out;
}

void compositions(std::size_t k, int remaining, std::vector<int>& prefix, int g, std::vector<SimplexPoint>& out) {
    if (prefix.size() + 1 == k) {
        prefix.push_back(remaining);
        out.push_back({prefix, g});
        prefix.pop_back();
        return;
    }
    for (int n = remaining; n >= 0; --n) {
        prefix.push_back(n);
        compositions(k, remaining - n, prefix, g, out);
        prefix.pop_back();
    }
}

}  // namespace

std::uint64_t binomial(std::uint64_t n, std::uint64_t r) {
    if (r > n) return 0;
    r = std::min(r, n - r);
    std::uint64_t c = 1;
    for (std::uint64_t i = 1; i <= r; ++i) c = c * (n - r + i) / i;
    return c;
}

std::vector<SimplexPoint> grid_points(std::size_t k, int g) {
    if (k < 1) throw ValidationError("grid_points needs K >= 1");
    if (g < 1) throw ValidationError("grid_points needs resolution g >= 1");
    std::vector<SimplexPoint> out;
    out.reserve(binomial(g + k - 1, k - 1));
    std::vector<int> prefix;
    compositions(k, g, prefix, g, out);
    return out;
}

Assignment sample_assignment(const ChoiceSets& sets, const SimplexPoint& p, std::uint64_t seed, ZeroMass policy) {
    Rng rng(seed);
    Assignment out;
    out.path_index.reserve(sets.size());
    for (std::size_t a = 0; a < sets.size(); ++a) {
        const auto& mask = sets[a].valid_mask;
        if (mask.size() != p.size()) {
            throw ValidationError("simplex point has " + std::to_string(p.size()) + " components, agent " +
                                  std::to_string(a) + " has K = " + std::to_string(mask.size()));
        }
        std::uint64_t total = 0;
        for (std::size_t k = 0; k < mask.size(); ++k) total += mask[k] ? p.numerators[k] : 0;
        if (total == 0 && policy == ZeroMass::UniformOverValid) {
            const auto ranks = valid_ranks(sets[a]);
            if (!ranks.empty()) {
                out.path_index.push_back(ranks[rng.below(ranks.size())]);
                continue;
            }
        }
        if (total == 0) {
            throw ValidationError("agent " + std::to_string(a) + " has zero probability mass on its valid paths");
        }
        std::uint64_t u = rng.below(total);
        int chosen = -1;
        for (std::size_t k = 0; k < mask.size(); ++k) {
            if (!mask[k]) continue;
            const auto w = static_cast<std::uint64_t>(p.numerators[k]);
            if (u < w) {
                chosen = static_cast<int>(k);
                break;
            }
            u -= w;
        }
        out.path_index.push_back(chosen);
    }
    return out;
}

Assignment random_assignment(const ChoiceSets& sets, std::uint64_t seed) {
    Rng rng(seed);
    Assignment out;
    out.path_index.reserve(sets.size());
    for (std::size_t a = 0; a < sets.size(); ++a) {
        const auto ranks = valid_ranks(sets[a]);
        if (ranks.empty()) throw ValidationError("agent " + std::to_string(a) + " has no valid path");
        out.path_index.push_back(ranks[rng.below(ranks.size())]);
    }
    return out;
}

std::vector<SampleSpec> plan_grid_samples(std::size_t k, int g, std::size_t count, std::uint64_t base_seed) {
    const auto grid = grid_points(k, g);
    std::vector<SampleSpec> specs;
    specs.reserve(count);
    const std::size_t m = grid.size();
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t pass = i / m;
        const std::size_t within = i % m;
        const std::size_t in_pass = std::min(m, count - pass * m);
        const std::size_t idx = within * m / in_pass;
        specs.push_back({i, idx, grid[idx], derive_seed(base_seed, idx + pass * m)});
    }
    return specs;
}

void save_sampling_manifest(const std::vector<SampleSpec>& specs, const std::filesystem::path& file) {
    std::ostringstream out;
    out << "sample_id,grid_index";
    const std::size_t k = specs.empty() ? 0 : specs.front().point.size();
    for (std::size_t j = 0; j < k; ++j) out << ",p_" << j;
    out << ",seed\n";
    for (const auto& s : specs) {
        out << s.sample_id << ',' << s.grid_index;
        for (std::size_t j = 0; j < k; ++j) out << ',' << csv::format(s.point.probability(j));
        out << ',' << s.seed << '\n';
    }
    csv::write_text(file, out.str());
}

std::vector<SampleSpec> load_sampling_manifest(const std::filesystem::path& file, int resolution) {
    const auto t = csv::read(file);
    const auto cid = t.column("sample_id"), cg = t.column("grid_index"), cs = t.column("seed");
    std::vector<std::size_t> pcols;
    for (std::size_t j = 0;; ++j) {
        bool found = false;
        for (std::size_t c = 0; c < t.header.size(); ++c) {
            if (t.header[c] == "p_" + std::to_string(j)) {
                pcols.push_back(c);
                found = true;
            }
        }
        if (!found) break;
    }
    std::vector<SampleSpec> specs;
    for (const auto& row : t.rows) {
        SampleSpec s;
        s.sample_id = static_cast<std::size_t>(csv::to_int(row[cid], t.source));
        s.grid_index = static_cast<std::size_t>(csv::to_int(row[cg], t.source));
        s.point.resolution = resolution;
        int sum = 0;
        for (std::size_t c : pcols) {
            const double p = csv::to_double(row[c], t.source);
            const int n = static_cast<int>(std::lround(p * resolution));
            s.point.numerators.push_back(n);
            sum += n;
        }
        if (sum != resolution) throw LoadError(t.source + ": probabilities do not sum to one at resolution " +
                                               std::to_string(resolution));
        s.seed = std::stoull(row[cs]);
        specs.push_back(std::move(s));
    }
    return specs;
}

}  // namespace surrogate
