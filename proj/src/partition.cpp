#include "polylab/partition.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <thread>
#include <unordered_map>

#include "polylab/error.hpp"
#include "polylab/random.hpp"

namespace polylab {

namespace {

void check_layer(int layer_limit, int max_limit) {
    require(layer_limit >= 0 && layer_limit <= max_limit, ErrorCode::layer_out_of_range,
            "layer limit " + std::to_string(layer_limit) + " outside 0.." + std::to_string(max_limit));
}

ActivationCode forest_code(const ForestModel& m, const Eigen::Ref<const Eigen::VectorXd>& x, int layer_limit);

ActivationCode code_unchecked(const ForestModel& m, const Eigen::Ref<const Eigen::VectorXd>& x, int layer_limit) {
    return forest_code(m, x, layer_limit);
}

ActivationCode code_unchecked(const NetworkModel& m, const Eigen::Ref<const Eigen::VectorXd>& x, int layer_limit) {
    return activation_code(m, x, layer_limit);
}

void check_2d(Eigen::Index dimension) {
    require(dimension == 2, ErrorCode::invalid_argument,
            "exact enumeration needs a 2-D model, got dimension " + std::to_string(dimension));
}

// Compact keys that are equal exactly when activation codes are equal.

void append_bits(std::string& key, const Eigen::Ref<const Eigen::RowVectorXd>& pre) {
    std::uint8_t byte = 0;
    int used = 0;
    for (Eigen::Index k = 0; k < pre.size(); ++k) {
        byte = static_cast<std::uint8_t>((byte << 1) | (pre(k) > 0.0 ? 1 : 0));
        if (++used == 8) {
            key.push_back(static_cast<char>(byte));
            byte = 0;
            used = 0;
        }
    }
    if (used > 0) key.push_back(static_cast<char>(byte));
}

std::vector<std::string> network_keys(const NetworkModel& m, const Eigen::MatrixXd& x, int layer_limit) {
    const auto pre = hidden_pre_activations(m, x, layer_limit);
    std::vector<std::string> keys(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        for (const auto& z : pre) append_bits(keys[static_cast<std::size_t>(r)], z.row(r));
    return keys;
}

// A forest code through depth L is determined by the node each tree reaches
// after at most L steps.
template <class Derived>
std::string forest_key(const ForestModel& m, const Eigen::MatrixBase<Derived>& x, int layer_limit) {
    std::string key(m.trees.size() * sizeof(std::int32_t), '\0');
    for (std::size_t t = 0; t < m.trees.size(); ++t) {
        const auto& nodes = m.trees[t].nodes;
        std::int32_t i = 0;
        for (int step = 0; step < layer_limit && !nodes[static_cast<std::size_t>(i)].is_leaf(); ++step) {
            const auto& n = nodes[static_cast<std::size_t>(i)];
            i = x(n.feature) <= n.threshold ? n.left : n.right;
        }
        std::memcpy(key.data() + t * sizeof(std::int32_t), &i, sizeof i);
    }
    return key;
}

std::vector<std::string> forest_keys(const ForestModel& m, const Eigen::MatrixXd& x, int layer_limit) {
    std::vector<std::string> keys(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index r = 0; r < x.rows(); ++r) keys[static_cast<std::size_t>(r)] = forest_key(m, x.row(r), layer_limit);
    return keys;
}

Eigen::MatrixXd grid_row(const Box2& domain, int resolution, int row) {
    Eigen::MatrixXd pts(resolution, 2);
    const double w = (domain.upper.x() - domain.lower.x()) / resolution;
    const double h = (domain.upper.y() - domain.lower.y()) / resolution;
    for (int c = 0; c < resolution; ++c) {
        pts(c, 0) = domain.lower.x() + (c + 0.5) * w;
        pts(c, 1) = domain.lower.y() + (row + 0.5) * h;
    }
    return pts;
}

template <class KeysFn, class HashFn>
GridLabels label_grid_impl(const Box2& domain, int resolution, int layer_limit, int jobs, KeysFn keys_of,
                           HashFn code_hash) {
    domain.validate();
    require(resolution >= 2, ErrorCode::invalid_argument, "grid resolution must be at least 2");
    GridLabels g;
    g.resolution = resolution;
    g.domain = domain;
    g.layer_limit = layer_limit;
    g.ids.resize(static_cast<std::size_t>(resolution) * static_cast<std::size_t>(resolution));
    std::unordered_map<std::string, int> seen;

    jobs = std::clamp(jobs, 1, resolution);
    const int chunk = 4 * jobs;
    std::vector<std::vector<std::string>> rows(static_cast<std::size_t>(chunk));
    for (int start = 0; start < resolution; start += chunk) {
        const int count = std::min(chunk, resolution - start);
        auto work = [&](int w) {
            for (int r = w; r < count; r += jobs)
                rows[static_cast<std::size_t>(r)] = keys_of(grid_row(domain, resolution, start + r));
        };
        if (jobs == 1) {
            work(0);
        } else {
            std::vector<std::jthread> pool;
            for (int w = 0; w < jobs; ++w) pool.emplace_back(work, w);
        }
        // Rows are merged in order so ids do not depend on the worker count.
        for (int r = 0; r < count; ++r) {
            const int row = start + r;
            for (int c = 0; c < resolution; ++c) {
                auto& key = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
                auto [it, inserted] = seen.try_emplace(std::move(key), static_cast<int>(g.representatives.size()));
                if (inserted) {
                    g.representatives.push_back(g.center(c, row));
                    g.code_hashes.push_back(code_hash(g.representatives.back()));
                }
                g.ids[static_cast<std::size_t>(row * resolution + c)] = it->second;
            }
        }
    }
    return g;
}

template <class KeysFn>
std::vector<RegionVote> grid_votes(const GridLabels& grid, const Dataset& train, int class_count, KeysFn keys_of) {
    Eigen::MatrixXd reps(grid.region_count(), 2);
    for (int i = 0; i < grid.region_count(); ++i) reps.row(i) = grid.representatives[static_cast<std::size_t>(i)].transpose();
    std::unordered_map<std::string, int> ids;
    const auto rep_keys = keys_of(reps);
    for (std::size_t i = 0; i < rep_keys.size(); ++i) ids.emplace(rep_keys[i], static_cast<int>(i));
    std::vector<std::vector<int>> members(static_cast<std::size_t>(grid.region_count()));
    const auto keys = keys_of(train.features);
    for (std::size_t r = 0; r < keys.size(); ++r)
        if (const auto it = ids.find(keys[r]); it != ids.end())
            members[static_cast<std::size_t>(it->second)].push_back(train.labels[r]);
    std::vector<RegionVote> out;
    for (const auto& labels : members) out.push_back(vote_from_labels(labels, class_count));
    return out;
}

template <class Model>
void fill_cell_votes(std::vector<RegionCell>& cells, const Model& m, const Dataset& train) {
    std::map<ActivationCode, std::size_t> index;
    for (std::size_t i = 0; i < cells.size(); ++i) index.emplace(cells[i].code, i);
    const int limit = cells.empty() ? 0 : cells.front().code.layer_limit;
    std::vector<std::vector<int>> members(cells.size());
    for (Eigen::Index r = 0; r < train.size(); ++r) {
        const auto code = code_unchecked(m, train.features.row(r).transpose(), limit);
        if (const auto it = index.find(code); it != index.end())
            members[it->second].push_back(train.labels[static_cast<std::size_t>(r)]);
    }
    for (std::size_t i = 0; i < cells.size(); ++i) cells[i].vote = vote_from_labels(members[i], m.class_count);
}

} // namespace

std::size_t ActivationCode::symbol_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.size();
    return n;
}

std::string ActivationCode::hex(int bits_per_symbol) const {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    unsigned nibble = 0;
    int used = 0;
    auto push_bit = [&](unsigned bit) {
        nibble = (nibble << 1) | bit;
        if (++used == 4) {
            out.push_back(digits[nibble]);
            nibble = 0;
            used = 0;
        }
    };
    for (const auto& l : layers)
        for (std::uint8_t s : l)
            for (int b = bits_per_symbol - 1; b >= 0; --b) push_bit((s >> b) & 1U);
    if (used > 0) {
        nibble <<= (4 - used);
        out.push_back(digits[nibble]);
    }
    return out.empty() ? "0" : out;
}

std::uint64_t ActivationCode::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& l : layers) {
        for (std::uint8_t s : l) {
            h ^= s;
            h *= 0x100000001b3ULL;
        }
        h ^= 0xff;
        h *= 0x100000001b3ULL;
    }
    return splitmix64(h);
}

int max_layer_limit(const NetworkModel& m) { return m.hidden_depth(); }
int max_layer_limit(const ForestModel& m) { return m.depth(); }

ActivationCode activation_code(const NetworkModel& m, const Eigen::Ref<const Eigen::VectorXd>& x, int layer_limit) {
    check_layer(layer_limit, max_layer_limit(m));
    const ForwardPass pass = forward(m, x);
    ActivationCode code;
    code.layer_limit = layer_limit;
    for (int l = 0; l < layer_limit; ++l) {
        const auto& z = pass.pre_activations[static_cast<std::size_t>(l)];
        std::vector<std::uint8_t> bits(static_cast<std::size_t>(z.size()));
        for (Eigen::Index k = 0; k < z.size(); ++k) bits[static_cast<std::size_t>(k)] = z(k) > 0.0 ? 1 : 0;
        code.layers.push_back(std::move(bits));
    }
    return code;
}

ActivationCode activation_code(const ForestModel& m, const Eigen::Ref<const Eigen::VectorXd>& x, int layer_limit) {
    require(x.size() == m.dimension, ErrorCode::dimension_mismatch,
            "expected " + std::to_string(m.dimension) + " features, got " + std::to_string(x.size()));
    require(x.allFinite(), ErrorCode::invalid_argument, "input has non-finite coordinates");
    check_layer(layer_limit, max_layer_limit(m));
    return forest_code(m, x, layer_limit);
}

namespace {

ActivationCode forest_code(const ForestModel& m, const Eigen::Ref<const Eigen::VectorXd>& x, int layer_limit) {
    ActivationCode code;
    code.layer_limit = layer_limit;
    code.layers.assign(static_cast<std::size_t>(layer_limit),
                       std::vector<std::uint8_t>(m.trees.size(), ActivationCode::absent));
    for (std::size_t t = 0; t < m.trees.size(); ++t) {
        const auto dirs = m.trees[t].path(x);
        for (std::size_t l = 0; l < dirs.size() && l < static_cast<std::size_t>(layer_limit); ++l) code.layers[l][t] = dirs[l];
    }
    return code;
}

} // namespace

int active_unit_count(const NetworkModel& m, const Eigen::Ref<const Eigen::VectorXd>& x) {
    const auto pass = forward(m, x);
    return static_cast<int>((pass.pre_activations.back().array() > 0.0).count());
}

Eigen::Index RegionVote::total() const {
    Eigen::Index n = 0;
    for (auto c : class_counts) n += c;
    return n;
}

RegionVote vote_from_labels(std::span<const int> labels, int class_count) {
    RegionVote v;
    v.class_counts.assign(static_cast<std::size_t>(class_count), 0);
    for (int y : labels) ++v.class_counts[static_cast<std::size_t>(y)];
    v.empty = labels.empty();
    if (!v.empty) {
        v.posterior.resize(class_count);
        for (int k = 0; k < class_count; ++k)
            v.posterior(k) = static_cast<double>(v.class_counts[static_cast<std::size_t>(k)]) / static_cast<double>(labels.size());
    }
    return v;
}

bool RegionCell::contains_strictly(const Eigen::Vector2d& x) const {
    return std::all_of(halfspaces.begin(), halfspaces.end(), [&](const HalfPlane& h) { return h.slack(x) > 0.0; });
}

std::vector<RegionCell> enumerate_regions_2d(const NetworkModel& m, const Box2& domain, int layer_limit) {
    check_2d(m.dimension);
    domain.validate();
    check_layer(layer_limit, max_layer_limit(m));

    struct Work {
        std::vector<HalfPlane> halfspaces;
        Eigen::MatrixXd linear;  // current layer input = linear * x + offset
        Eigen::VectorXd offset;
        Eigen::MatrixXd pre_linear;
        Eigen::VectorXd pre_offset;
        std::vector<std::vector<std::uint8_t>> bits;
    };
    std::vector<Work> cells(1);
    cells[0].linear = Eigen::Matrix2d::Identity();
    cells[0].offset = Eigen::Vector2d::Zero();

    for (int l = 0; l < layer_limit; ++l) {
        const auto& layer = m.layers[static_cast<std::size_t>(l)];
        const Eigen::Index units = layer.weights.cols();
        for (auto& c : cells) {
            c.pre_linear = layer.weights.transpose() * c.linear;
            c.pre_offset = layer.weights.transpose() * c.offset + layer.biases;
            c.bits.emplace_back(static_cast<std::size_t>(units), 0);
        }
        for (Eigen::Index k = 0; k < units; ++k) {
            std::vector<Work> next;
            next.reserve(cells.size() * 2);
            for (auto& c : cells) {
                const Eigen::Vector2d normal = c.pre_linear.row(k).transpose();
                const double norm = normal.norm();
                auto& bit = c.bits.back()[static_cast<std::size_t>(k)];
                if (norm < 1e-300) {
                    bit = c.pre_offset(k) > 0.0 ? 1 : 0;
                    next.push_back(std::move(c));
                    continue;
                }
                // Distance-scaled pre-activation g(x) = a . x + b.
                const Eigen::Vector2d a = normal / norm;
                const double b = c.pre_offset(k) / norm;
                const auto lo = solve_lp2d(c.halfspaces, a, domain);
                const auto hi = solve_lp2d(c.halfspaces, -a, domain);
                const double g_min = lo.value + b;
                const double g_max = -hi.value + b;
                if (g_max <= sliver_margin) {
                    bit = 0;
                    next.push_back(std::move(c));
                } else if (g_min >= -sliver_margin) {
                    bit = 1;
                    next.push_back(std::move(c));
                } else {
                    Work on = c;
                    on.bits.back()[static_cast<std::size_t>(k)] = 1;
                    on.halfspaces.push_back({-a, b});
                    bit = 0;
                    c.halfspaces.push_back({a, -b});
                    next.push_back(std::move(c));
                    next.push_back(std::move(on));
                }
            }
            cells.swap(next);
        }
        for (auto& c : cells) {
            Eigen::VectorXd mask(units);
            for (Eigen::Index k = 0; k < units; ++k) mask(k) = c.bits.back()[static_cast<std::size_t>(k)];
            c.linear = mask.asDiagonal() * c.pre_linear;
            c.offset = mask.cwiseProduct(c.pre_offset);
        }
    }

    std::vector<RegionCell> out;
    out.reserve(cells.size());
    for (auto& c : cells) {
        RegionCell cell;
        cell.code.layers = std::move(c.bits);
        cell.code.layer_limit = layer_limit;
        cell.halfspaces = std::move(c.halfspaces);
        cell.map_linear = std::move(c.linear);
        cell.map_offset = std::move(c.offset);
        cell.polygon = clip_polygon(domain, cell.halfspaces);
        cell.witness = polygon_centroid(cell.polygon);
        out.push_back(std::move(cell));
    }
    return out;
}

std::vector<RegionCell> enumerate_regions_2d(const ForestModel& m, const Box2& domain, int layer_limit,
                                             std::size_t max_rectangles) {
    check_2d(m.dimension);
    domain.validate();
    check_layer(layer_limit, max_layer_limit(m));

    std::vector<double> cuts[2];
    for (int axis = 0; axis < 2; ++axis) cuts[axis] = {domain.lower(axis), domain.upper(axis)};
    for (const auto& tree : m.trees) {
        std::vector<std::pair<int, int>> stack{{0, 0}};
        while (!stack.empty()) {
            const auto [id, depth] = stack.back();
            stack.pop_back();
            const auto& n = tree.nodes[static_cast<std::size_t>(id)];
            if (n.is_leaf() || depth >= layer_limit) continue;
            if (n.threshold > domain.lower(n.feature) && n.threshold < domain.upper(n.feature))
                cuts[n.feature].push_back(n.threshold);
            stack.emplace_back(n.left, depth + 1);
            stack.emplace_back(n.right, depth + 1);
        }
    }
    for (auto& c : cuts) {
        std::sort(c.begin(), c.end());
        c.erase(std::unique(c.begin(), c.end()), c.end());
    }
    const std::size_t rects = (cuts[0].size() - 1) * (cuts[1].size() - 1);
    require(rects <= max_rectangles, ErrorCode::invalid_argument,
            "forest partition needs " + std::to_string(rects) + " elementary rectangles; use grid labelling instead");

    std::unordered_map<std::string, std::size_t> index;
    std::vector<Box2> boxes;
    std::vector<Eigen::Vector2d> firsts;
    for (std::size_t j = 0; j + 1 < cuts[1].size(); ++j) {
        for (std::size_t i = 0; i + 1 < cuts[0].size(); ++i) {
            const Eigen::Vector2d lo(cuts[0][i], cuts[1][j]);
            const Eigen::Vector2d hi(cuts[0][i + 1], cuts[1][j + 1]);
            const Eigen::Vector2d mid = 0.5 * (lo + hi);
            auto [it, inserted] = index.try_emplace(forest_key(m, mid, layer_limit), boxes.size());
            if (inserted) {
                boxes.push_back({lo, hi});
                firsts.push_back(mid);
            } else {
                auto& b = boxes[it->second];
                b.lower = b.lower.cwiseMin(lo);
                b.upper = b.upper.cwiseMax(hi);
            }
        }
    }

    std::vector<RegionCell> out;
    for (std::size_t c = 0; c < boxes.size(); ++c) {
        RegionCell cell;
        cell.code = forest_code(m, firsts[c], layer_limit);
        const auto& b = boxes[c];
        // Keep only the sides that cut into the domain.
        const auto sides = b.halfplanes();
        const auto frame = domain.halfplanes();
        for (std::size_t s = 0; s < sides.size(); ++s)
            if (sides[s].offset != frame[s].offset) cell.halfspaces.push_back(sides[s]);
        cell.map_linear = Eigen::Matrix2d::Identity();
        cell.map_offset = Eigen::Vector2d::Zero();
        cell.polygon = {b.lower, {b.upper.x(), b.lower.y()}, b.upper, {b.lower.x(), b.upper.y()}};
        cell.witness = b.center();
        out.push_back(std::move(cell));
    }
    return out;
}

Box2 data_domain(const Eigen::MatrixXd& features, double inflate) {
    require(features.cols() == 2 && features.rows() >= 1, ErrorCode::invalid_argument,
            "domain inference needs non-empty 2-D data");
    Eigen::Vector2d lo = features.colwise().minCoeff().transpose();
    Eigen::Vector2d hi = features.colwise().maxCoeff().transpose();
    Eigen::Vector2d pad = inflate * (hi - lo);
    for (int k = 0; k < 2; ++k)
        if (pad(k) <= 0.0) pad(k) = std::max(1.0, std::abs(lo(k))) * std::max(inflate, 0.1);
    return {lo - pad, hi + pad};
}

Eigen::Vector2d GridLabels::center(int col, int row) const {
    const double w = (domain.upper.x() - domain.lower.x()) / resolution;
    const double h = (domain.upper.y() - domain.lower.y()) / resolution;
    return {domain.lower.x() + (col + 0.5) * w, domain.lower.y() + (row + 0.5) * h};
}

GridLabels label_grid(const NetworkModel& m, const Box2& domain, int resolution, int layer_limit, int jobs) {
    require(m.dimension == 2, ErrorCode::invalid_argument, "grid labelling needs a 2-D model");
    check_layer(layer_limit, max_layer_limit(m));
    return label_grid_impl(
        domain, resolution, layer_limit, jobs, [&](const Eigen::MatrixXd& pts) { return network_keys(m, pts, layer_limit); },
        [&](const Eigen::Vector2d& p) { return activation_code(m, p, layer_limit).hash(); });
}

GridLabels label_grid(const ForestModel& m, const Box2& domain, int resolution, int layer_limit, int jobs) {
    require(m.dimension == 2, ErrorCode::invalid_argument, "grid labelling needs a 2-D model");
    check_layer(layer_limit, max_layer_limit(m));
    return label_grid_impl(
        domain, resolution, layer_limit, jobs, [&](const Eigen::MatrixXd& pts) { return forest_keys(m, pts, layer_limit); },
        [&](const Eigen::Vector2d& p) { return forest_code(m, p, layer_limit).hash(); });
}

void cell_posteriors(std::vector<RegionCell>& cells, const NetworkModel& m, const Dataset& train) {
    fill_cell_votes(cells, m, train);
}

void cell_posteriors(std::vector<RegionCell>& cells, const ForestModel& m, const Dataset& train) {
    fill_cell_votes(cells, m, train);
}

std::vector<RegionVote> grid_posteriors(const GridLabels& grid, const NetworkModel& m, const Dataset& train) {
    return grid_votes(grid, train, m.class_count,
                      [&](const Eigen::MatrixXd& pts) { return network_keys(m, pts, grid.layer_limit); });
}

std::vector<RegionVote> grid_posteriors(const GridLabels& grid, const ForestModel& m, const Dataset& train) {
    return grid_votes(grid, train, m.class_count,
                      [&](const Eigen::MatrixXd& pts) { return forest_keys(m, pts, grid.layer_limit); });
}

nlohmann::json regions_json(const std::vector<RegionCell>& cells, int bits_per_symbol) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& c : cells) {
        nlohmann::json hs = nlohmann::json::array();
        for (const auto& h : c.halfspaces) hs.push_back({h.normal.x(), h.normal.y(), h.offset});
        nlohmann::json entry = {{"code", c.code.hex(bits_per_symbol)}, {"halfspaces", hs}, {"count", c.vote.total()}};
        if (c.vote.empty) entry["posterior"] = nullptr;
        else entry["posterior"] = std::vector<double>(c.vote.posterior.data(), c.vote.posterior.data() + c.vote.posterior.size());
        out.push_back(std::move(entry));
    }
    return out;
}

} // namespace polylab
