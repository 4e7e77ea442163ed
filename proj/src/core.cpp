#include "moma/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_set>

namespace moma {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

void require_finite(std::span<const double> values, const char* what) {
    for (double v : values) {
        if (!std::isfinite(v)) throw InvalidInput(std::string(what) + ": non-finite entry");
    }
}

} // namespace

double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double standard_normal(Rng& rng) {
    // 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = splitmix64(seed);
    for (std::uint64_t p : path) h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
    return h;
}

Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    return Rng(derive_seed(seed, path));
}

// ---------------------------------------------------------------------------

SimplexVector::SimplexVector(std::vector<double> weights) : weights_(std::move(weights)) {
    if (weights_.empty()) throw InvalidInput("SimplexVector: empty weights");
    require_finite(weights_, "SimplexVector");
    double sum = 0.0;
    for (double w : weights_) {
        if (w < -1e-12) throw InvalidInput("SimplexVector: negative weight");
        sum += w;
    }
    if (std::abs(sum - 1.0) > kSimplexTolerance) {
        throw InvalidInput("SimplexVector: weights sum to " + format_real(sum));
    }
}

SimplexVector SimplexVector::uniform(std::size_t m) {
    if (m == 0) throw InvalidInput("SimplexVector::uniform: m = 0");
    return SimplexVector(std::vector<double>(m, 1.0 / static_cast<double>(m)));
}

SimplexVector SimplexVector::vertex(std::size_t m, std::size_t index) {
    if (index >= m) throw InvalidInput("SimplexVector::vertex: index out of range");
    std::vector<double> w(m, 0.0);
    w[index] = 1.0;
    return SimplexVector(std::move(w));
}

bool SimplexVector::is_interior() const noexcept {
    return std::all_of(weights_.begin(), weights_.end(), [](double w) { return w > 0.0; });
}

SimplexVector simplex_project(std::span<const double> raw) {
    if (raw.size() < 2) throw InvalidInput("simplex_project: need at least two coordinates");
    require_finite(raw, "simplex_project");

    // Sort-based threshold search: find tau with sum(max(x - tau, 0)) = 1.
    std::vector<double> sorted(raw.begin(), raw.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double cumulative = 0.0;
    double tau = 0.0;
    for (std::size_t k = 0; k < sorted.size(); ++k) {
        cumulative += sorted[k];
        const double candidate = (cumulative - 1.0) / static_cast<double>(k + 1);
        if (sorted[k] - candidate > 0.0) tau = candidate;
    }
    std::vector<double> out(raw.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        out[i] = std::max(raw[i] - tau, 0.0);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return SimplexVector(std::move(out));
}

std::size_t sample_action(const SimplexVector& policy, Rng& rng) {
    const double u = uniform01(rng);
    double cumulative = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < policy.size(); ++i) {
        if (policy[i] <= 0.0) continue;
        cumulative += policy[i];
        last_positive = i;
        if (u < cumulative) return i;
    }
    return last_positive;
}

double discounted_return(std::span<const double> rewards, double gamma) {
    double total = 0.0;
    double discount = 1.0;
    for (double r : rewards) {
        total += discount * r;
        discount *= gamma;
    }
    return total;
}

// ---------------------------------------------------------------------------

StateVector::StateVector(double x) : dim_(1) {
    if (!std::isfinite(x)) throw InvalidInput("StateVector: non-finite coordinate");
    coords_[0] = x;
}

StateVector::StateVector(std::initializer_list<double> coords)
    : StateVector(std::span<const double>(coords.begin(), coords.size())) {}

StateVector::StateVector(std::span<const double> coords) : dim_(coords.size()) {
    if (coords.size() > kMaxDim) throw InvalidInput("StateVector: dimension exceeds capacity");
    require_finite(coords, "StateVector");
    std::copy(coords.begin(), coords.end(), coords_.begin());
}

bool operator==(const StateVector& a, const StateVector& b) noexcept {
    return a.dim_ == b.dim_ && std::equal(a.coords_.begin(), a.coords_.begin() + a.dim_, b.coords_.begin());
}

DiscreteActionSet::DiscreteActionSet(std::vector<std::string> labels) : labels_(std::move(labels)) {
    if (labels_.size() < 2) throw InvalidInput("DiscreteActionSet: need at least two actions");
    std::unordered_set<std::string> seen(labels_.begin(), labels_.end());
    if (seen.size() != labels_.size()) throw InvalidInput("DiscreteActionSet: duplicate labels");
}

std::size_t DiscreteActionSet::index_of(const std::string& label) const {
    const auto it = std::find(labels_.begin(), labels_.end(), label);
    if (it == labels_.end()) throw InvalidInput("DiscreteActionSet: unknown label " + label);
    return static_cast<std::size_t>(it - labels_.begin());
}

DiscountConfig::DiscountConfig(double gamma) : gamma_(gamma) {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidInput("DiscountConfig: gamma must lie in [0, 1)");
}

OfflineDataset::OfflineDataset(std::vector<Transition> transitions, std::size_t num_actions,
                               double gamma, std::uint64_t seed)
    : transitions_(std::move(transitions)), num_actions_(num_actions), gamma_(gamma), seed_(seed) {
    if (transitions_.empty()) throw InvalidInput("OfflineDataset: no transitions");
    if (num_actions_ < 2) throw InvalidInput("OfflineDataset: need at least two actions");
    (void)DiscountConfig(gamma);
    const std::size_t dim = transitions_.front().state.size();
    for (std::size_t i = 0; i < transitions_.size(); ++i) {
        const Transition& t = transitions_[i];
        if (t.action >= num_actions_) {
            throw InvalidInput("OfflineDataset: transition " + std::to_string(i) + " has invalid action");
        }
        if (t.state.size() != dim || t.next_state.size() != dim) {
            throw InvalidInput("OfflineDataset: transition " + std::to_string(i) + " has inconsistent state dimension");
        }
        if (!std::isfinite(t.reward)) {
            throw InvalidInput("OfflineDataset: transition " + std::to_string(i) + " has non-finite reward");
        }
    }
}

std::vector<std::size_t> OfflineDataset::action_counts() const {
    std::vector<std::size_t> counts(num_actions_, 0);
    for (const Transition& t : transitions_) ++counts[t.action];
    return counts;
}

// ---------------------------------------------------------------------------

std::string format_real(double value) {
    std::ostringstream os;
    os << std::setprecision(17) << value;
    return os.str();
}

namespace {

std::string format_state(const StateVector& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i > 0) out += ';';
        out += format_real(s[i]);
    }
    return out;
}

double parse_real(std::string_view text, std::size_t line) {
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw InvalidInput("dataset line " + std::to_string(line) + ": bad number '" + std::string(text) + "'");
    }
    return value;
}

StateVector parse_state(std::string_view text, std::size_t line) {
    std::vector<double> coords;
    std::size_t start = 0;
    while (true) {
        const std::size_t end = text.find(';', start);
        coords.push_back(parse_real(text.substr(start, end - start), line));
        if (end == std::string_view::npos) break;
        start = end + 1;
    }
    return StateVector(std::span<const double>(coords));
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t end = line.find(',', start);
        fields.push_back(line.substr(start, end - start));
        if (end == std::string_view::npos) break;
        start = end + 1;
    }
    return fields;
}

} // namespace

void write_dataset_csv(const OfflineDataset& dataset, std::ostream& out) {
    out << "#actions=" << dataset.num_actions() << '\n';
    out << "#gamma=" << format_real(dataset.gamma()) << '\n';
    out << "#seed=" << dataset.seed() << '\n';
    out << "s,a,r,s_next,terminal\n";
    for (const Transition& t : dataset.transitions()) {
        out << format_state(t.state) << ',' << t.action << ',' << format_real(t.reward) << ','
            << format_state(t.next_state) << ',' << (t.terminal ? 1 : 0) << '\n';
    }
}

OfflineDataset read_dataset_csv(std::istream& in) {
    std::size_t num_actions = 0;
    double gamma = 0.0;
    std::uint64_t seed = 0;
    bool header_seen = false;
    std::vector<Transition> transitions;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.front() == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            const std::string key = line.substr(1, eq - 1);
            const std::string value = line.substr(eq + 1);
            if (key == "actions") num_actions = std::stoul(value);
            else if (key == "gamma") gamma = parse_real(value, line_no);
            else if (key == "seed") seed = std::stoull(value);
            continue;
        }
        if (!header_seen) {
            if (line != "s,a,r,s_next,terminal") throw InvalidInput("dataset: missing header");
            header_seen = true;
            continue;
        }
        const auto fields = split_commas(line);
        if (fields.size() != 5) throw InvalidInput("dataset line " + std::to_string(line_no) + ": expected 5 fields");
        Transition t;
        t.state = parse_state(fields[0], line_no);
        t.action = static_cast<std::size_t>(parse_real(fields[1], line_no));
        t.reward = parse_real(fields[2], line_no);
        t.next_state = parse_state(fields[3], line_no);
        t.terminal = parse_real(fields[4], line_no) != 0.0;
        transitions.push_back(t);
    }
    if (num_actions == 0) {
        for (const Transition& t : transitions) num_actions = std::max(num_actions, t.action + 1);
        num_actions = std::max<std::size_t>(num_actions, 2);
    }
    return OfflineDataset(std::move(transitions), num_actions, gamma, seed);
}

} // namespace moma
