#include "moma/approximator.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace moma {

namespace {

using Index = Eigen::Index;

void write_list(std::ostream& out, const char* key, const double* data, Index n) {
    out << key << " =";
    for (Index i = 0; i < n; ++i) out << ' ' << format_real(data[i]);
    out << '\n';
}

} // namespace

RbfFeatures::RbfFeatures(std::vector<double> centers, double lengthscale, bool bias)
    : centers_(std::move(centers)), lengthscale_(lengthscale), bias_(bias) {
    if (!(lengthscale_ > 0.0)) throw InvalidInput("RbfFeatures: lengthscale must be positive");
    if (size() == 0) throw InvalidInput("RbfFeatures: no features");
}

std::shared_ptr<const RbfFeatures> RbfFeatures::default_grid() {
    static const auto grid = [] {
        std::vector<double> centers(11);
        for (std::size_t k = 0; k < centers.size(); ++k) centers[k] = -4.0 + 0.8 * static_cast<double>(k);
        return std::make_shared<const RbfFeatures>(std::move(centers), 1.0, true);
    }();
    return grid;
}

void RbfFeatures::evaluate(const StateVector& s, std::span<double> out) const {
    const double x = s.scalar();
    const double inv = 1.0 / (lengthscale_ * lengthscale_);
    for (std::size_t k = 0; k < centers_.size(); ++k) {
        const double d = x - centers_[k];
        out[k] = std::exp(-d * d * inv);
    }
    if (bias_) out[centers_.size()] = 1.0;
}

// ---------------------------------------------------------------------------

LinearApproximator::LinearApproximator(std::shared_ptr<const RbfFeatures> features, Eigen::VectorXd beta)
    : features_(std::move(features)), beta_(std::move(beta)) {
    if (!features_) throw InvalidInput("LinearApproximator: null features");
    if (static_cast<std::size_t>(beta_.size()) != features_->size()) throw InvalidInput("LinearApproximator: size mismatch");
    if (!beta_.allFinite()) throw InvalidInput("LinearApproximator: non-finite coefficient");
}

double LinearApproximator::evaluate(const StateVector& s) const {
    Eigen::VectorXd phi(beta_.size());
    features_->evaluate(s, std::span<double>(phi.data(), static_cast<std::size_t>(phi.size())));
    return phi.dot(beta_);
}

void LinearApproximator::write(std::ostream& out) const {
    out << "family = linear\n";
    out << "lengthscale = " << format_real(features_->lengthscale()) << '\n';
    out << "bias = " << (features_->bias() ? 1 : 0) << '\n';
    write_list(out, "centers", features_->centers().data(), static_cast<Index>(features_->centers().size()));
    write_list(out, "beta", beta_.data(), beta_.size());
}

FeedforwardApproximator::FeedforwardApproximator(Weights weights) : weights_(std::move(weights)) {
    const auto& w = weights_;
    const Index inputs = w.input_mean.size();
    const Index hidden = w.hidden_bias.size();
    if (inputs == 0 || hidden == 0 || w.input_scale.size() != inputs || w.hidden_weights.rows() != hidden ||
        w.hidden_weights.cols() != inputs || w.output_weights.size() != hidden) {
        throw InvalidInput("FeedforwardApproximator: inconsistent shapes");
    }
}

double FeedforwardApproximator::evaluate(const StateVector& s) const {
    const auto& w = weights_;
    const Index inputs = w.input_mean.size();
    if (static_cast<Index>(s.size()) != inputs) throw InvalidInput("FeedforwardApproximator: state dimension mismatch");
    Eigen::VectorXd x(inputs);
    for (Index i = 0; i < inputs; ++i) x[i] = (s[static_cast<std::size_t>(i)] - w.input_mean[i]) / w.input_scale[i];
    const Eigen::VectorXd h = (w.hidden_weights * x + w.hidden_bias).array().tanh();
    return w.target_mean + w.target_scale * (w.output_weights.dot(h) + w.output_bias);
}

void FeedforwardApproximator::write(std::ostream& out) const {
    const auto& w = weights_;
    out << "family = feedforward\n";
    out << "inputs = " << w.input_mean.size() << '\n';
    out << "hidden = " << w.hidden_bias.size() << '\n';
    write_list(out, "input_mean", w.input_mean.data(), w.input_mean.size());
    write_list(out, "input_scale", w.input_scale.data(), w.input_scale.size());
    write_list(out, "hidden_weights", w.hidden_weights.data(), w.hidden_weights.size());
    write_list(out, "hidden_bias", w.hidden_bias.data(), w.hidden_bias.size());
    write_list(out, "output_weights", w.output_weights.data(), w.output_weights.size());
    out << "output_bias = " << format_real(w.output_bias) << '\n';
    out << "target_mean = " << format_real(w.target_mean) << '\n';
    out << "target_scale = " << format_real(w.target_scale) << '\n';
}

// ---------------------------------------------------------------------------

namespace {

void check_samples(std::span<const AugmentedQSample> samples) {
    if (samples.empty()) throw InvalidInput("fit_approximator: no samples");
    for (const auto& s : samples) {
        if (s.action != samples.front().action) throw InvalidInput("fit_approximator: samples mix actions");
        if (!std::isfinite(s.value)) throw InvalidInput("fit_approximator: non-finite target");
    }
}

FitResult fit_linear(std::span<const AugmentedQSample> samples, const LinearFamilyConfig& config) {
    const auto& features = config.features;
    if (!features) throw InvalidInput("fit_approximator: null feature map");
    const auto n = static_cast<Index>(samples.size());
    const auto p = static_cast<Index>(features->size());
    if (n < p) throw InvalidInput("fit_approximator: fewer samples than linear parameters");

    Eigen::MatrixXd design(n, p);
    Eigen::VectorXd targets(n);
    Eigen::VectorXd row(p);
    for (Index j = 0; j < n; ++j) {
        features->evaluate(samples[static_cast<std::size_t>(j)].state, std::span<double>(row.data(), static_cast<std::size_t>(p)));
        design.row(j) = row.transpose();
        targets[j] = samples[static_cast<std::size_t>(j)].value;
    }

    FitResult result;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    Eigen::VectorXd beta;
    if (qr.rank() == p) {
        beta = qr.solve(targets);
    } else {
        spdlog::debug("fit_approximator: design rank {} < {}, using ridge {}", qr.rank(), p, config.ridge);
        result.ridge_fallback = true;
        Eigen::MatrixXd augmented(n + p, p);
        augmented << design, std::sqrt(config.ridge * static_cast<double>(n)) * Eigen::MatrixXd::Identity(p, p);
        Eigen::VectorXd augmented_targets = Eigen::VectorXd::Zero(n + p);
        augmented_targets.head(n) = targets;
        beta = augmented.colPivHouseholderQr().solve(augmented_targets);
    }
    result.training_mse = (design * beta - targets).squaredNorm() / static_cast<double>(n);
    result.approximator = std::make_shared<LinearApproximator>(features, std::move(beta));
    return result;
}

} // namespace

FitResult fit_feedforward(std::span<const AugmentedQSample> samples, const FeedforwardFamilyConfig& config,
                          const FeedforwardApproximator* warm_start) {
    check_samples(samples);
    if (config.hidden == 0 || config.max_epochs < 0 || !(config.learning_rate > 0.0)) {
        throw InvalidInput("fit_feedforward: invalid configuration");
    }
    const auto n = static_cast<Index>(samples.size());
    const auto d = static_cast<Index>(samples.front().state.size());
    const auto h = static_cast<Index>(config.hidden);

    FeedforwardApproximator::Weights w;
    if (warm_start != nullptr) {
        w = warm_start->weights();
        if (w.input_mean.size() != d || w.hidden_bias.size() != h) {
            throw InvalidInput("fit_feedforward: warm start shape mismatch");
        }
    } else {
        w.input_mean = Eigen::VectorXd::Zero(d);
        w.input_scale = Eigen::VectorXd::Ones(d);
        for (Index i = 0; i < d; ++i) {
            double mean = 0.0;
            for (const auto& s : samples) mean += s.state[static_cast<std::size_t>(i)];
            mean /= static_cast<double>(n);
            double var = 0.0;
            for (const auto& s : samples) var += std::pow(s.state[static_cast<std::size_t>(i)] - mean, 2);
            var /= static_cast<double>(n);
            w.input_mean[i] = mean;
            w.input_scale[i] = var > 1e-12 ? std::sqrt(var) : 1.0;
        }
        double tmean = 0.0;
        for (const auto& s : samples) tmean += s.value;
        tmean /= static_cast<double>(n);
        double tvar = 0.0;
        for (const auto& s : samples) tvar += (s.value - tmean) * (s.value - tmean);
        tvar /= static_cast<double>(n);
        w.target_mean = tmean;
        w.target_scale = tvar > 1e-12 ? std::sqrt(tvar) : 1.0;

        Rng rng(config.seed);
        const double limit_in = std::sqrt(6.0 / static_cast<double>(d + h));
        const double limit_out = std::sqrt(6.0 / static_cast<double>(h + 1));
        w.hidden_weights.resize(h, d);
        for (Index i = 0; i < w.hidden_weights.size(); ++i) w.hidden_weights.data()[i] = limit_in * (2.0 * uniform01(rng) - 1.0);
        w.hidden_bias.resize(h);
        for (Index i = 0; i < h; ++i) w.hidden_bias[i] = limit_in * (2.0 * uniform01(rng) - 1.0);
        w.output_weights.resize(h);
        for (Index i = 0; i < h; ++i) w.output_weights[i] = limit_out * (2.0 * uniform01(rng) - 1.0);
        w.output_bias = 0.0;
    }

    Eigen::MatrixXd x(d, n);
    Eigen::VectorXd y(n);
    for (Index j = 0; j < n; ++j) {
        const auto& sample = samples[static_cast<std::size_t>(j)];
        for (Index i = 0; i < d; ++i) x(i, j) = (sample.state[static_cast<std::size_t>(i)] - w.input_mean[i]) / w.input_scale[i];
        y[j] = (sample.value - w.target_mean) / w.target_scale;
    }

    // Adam state for (W1, b1, w2, b2).
    Eigen::MatrixXd m_w1 = Eigen::MatrixXd::Zero(h, d), v_w1 = m_w1;
    Eigen::VectorXd m_b1 = Eigen::VectorXd::Zero(h), v_b1 = m_b1;
    Eigen::VectorXd m_w2 = Eigen::VectorXd::Zero(h), v_w2 = m_w2;
    double m_b2 = 0.0, v_b2 = 0.0;
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    auto loss = [&]() {
        const Eigen::MatrixXd act = ((w.hidden_weights * x).colwise() + w.hidden_bias).array().tanh();
        const Eigen::VectorXd pred = (act.transpose() * w.output_weights).array() + w.output_bias;
        return (pred - y).squaredNorm() / static_cast<double>(n);
    };

    double previous = loss();
    int epoch = 0;
    for (; epoch < config.max_epochs; ++epoch) {
        const Eigen::MatrixXd act = ((w.hidden_weights * x).colwise() + w.hidden_bias).array().tanh();
        const Eigen::VectorXd pred = (act.transpose() * w.output_weights).array() + w.output_bias;
        const Eigen::VectorXd residual = (2.0 / static_cast<double>(n)) * (pred - y);
        const Eigen::VectorXd g_w2 = act * residual;
        const double g_b2 = residual.sum();
        const Eigen::MatrixXd delta = (w.output_weights * residual.transpose()).cwiseProduct(
            (1.0 - act.array().square()).matrix());
        const Eigen::MatrixXd g_w1 = delta * x.transpose();
        const Eigen::VectorXd g_b1 = delta.rowwise().sum();

        const double t = static_cast<double>(epoch + 1);
        const double c1 = 1.0 - std::pow(beta1, t);
        const double c2 = 1.0 - std::pow(beta2, t);
        auto adam = [&](auto& param, auto& m, auto& v, const auto& g) {
            m = beta1 * m + (1.0 - beta1) * g;
            v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
            param.array() -= config.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
        };
        adam(w.hidden_weights, m_w1, v_w1, g_w1);
        adam(w.hidden_bias, m_b1, v_b1, g_b1);
        adam(w.output_weights, m_w2, v_w2, g_w2);
        m_b2 = beta1 * m_b2 + (1.0 - beta1) * g_b2;
        v_b2 = beta2 * v_b2 + (1.0 - beta2) * g_b2 * g_b2;
        w.output_bias -= config.learning_rate * (m_b2 / c1) / (std::sqrt(v_b2 / c2) + eps);

        const double current = loss();
        const double improvement = previous - current;
        previous = current;
        if (std::abs(improvement) < config.tolerance) {
            ++epoch;
            break;
        }
    }

    FitResult result;
    result.training_mse = previous * w.target_scale * w.target_scale;
    result.epochs = epoch;
    result.approximator = std::make_shared<FeedforwardApproximator>(std::move(w));
    return result;
}

FitResult fit_approximator(std::span<const AugmentedQSample> samples, const FamilyConfig& family) {
    check_samples(samples);
    if (const auto* linear = std::get_if<LinearFamilyConfig>(&family)) return fit_linear(samples, *linear);
    return fit_feedforward(samples, std::get<FeedforwardFamilyConfig>(family), nullptr);
}

// ---------------------------------------------------------------------------

SoftmaxFunctionalPolicy::SoftmaxFunctionalPolicy(std::vector<std::shared_ptr<const FunctionApproximator>> approximators,
                                                 double eta)
    : approximators_(std::move(approximators)), eta_(eta) {
    if (approximators_.size() < 2) throw InvalidInput("SoftmaxFunctionalPolicy: need at least two actions");
    if (!(eta_ > 0.0) || !std::isfinite(eta_)) throw InvalidInput("SoftmaxFunctionalPolicy: eta must be positive");
    for (const auto& f : approximators_) {
        if (!f) throw InvalidInput("SoftmaxFunctionalPolicy: null approximator");
    }
    std::shared_ptr<const RbfFeatures> shared;
    for (const auto& f : approximators_) {
        const auto* linear = dynamic_cast<const LinearApproximator*>(f.get());
        if (linear == nullptr || (shared && linear->features() != shared)) {
            shared.reset();
            break;
        }
        shared = linear->features();
    }
    if (shared) {
        shared_features_ = shared;
        shared_betas_.resize(static_cast<Index>(approximators_.size()), static_cast<Index>(shared->size()));
        for (std::size_t a = 0; a < approximators_.size(); ++a) {
            shared_betas_.row(static_cast<Index>(a)) =
                static_cast<const LinearApproximator&>(*approximators_[a]).beta().transpose();
        }
    }
}

SoftmaxFunctionalPolicy SoftmaxFunctionalPolicy::uniform(std::size_t num_actions,
                                                         std::shared_ptr<const RbfFeatures> features, double eta) {
    std::vector<std::shared_ptr<const FunctionApproximator>> zeros;
    const auto p = static_cast<Index>(features->size());
    for (std::size_t a = 0; a < num_actions; ++a) {
        zeros.push_back(std::make_shared<LinearApproximator>(features, Eigen::VectorXd::Zero(p)));
    }
    return SoftmaxFunctionalPolicy(std::move(zeros), eta);
}

std::vector<double> SoftmaxFunctionalPolicy::scores(const StateVector& s) const {
    std::vector<double> f(approximators_.size());
    if (shared_features_) {
        Eigen::VectorXd phi(shared_betas_.cols());
        shared_features_->evaluate(s, std::span<double>(phi.data(), static_cast<std::size_t>(phi.size())));
        Eigen::Map<Eigen::VectorXd>(f.data(), static_cast<Index>(f.size())) = shared_betas_ * phi;
        return f;
    }
    for (std::size_t a = 0; a < f.size(); ++a) f[a] = approximators_[a]->evaluate(s);
    return f;
}

SimplexVector SoftmaxFunctionalPolicy::action_distribution(const StateVector& s) const {
    return softmax(scores(s), eta_);
}

SimplexVector policy_evaluate(const SoftmaxFunctionalPolicy& policy, const StateVector& s) {
    return policy.action_distribution(s);
}

GreedyQPolicy::GreedyQPolicy(std::vector<std::shared_ptr<const FunctionApproximator>> q_functions)
    : q_functions_(std::move(q_functions)) {
    if (q_functions_.size() < 2) throw InvalidInput("GreedyQPolicy: need at least two actions");
    for (const auto& f : q_functions_) {
        if (!f) throw InvalidInput("GreedyQPolicy: null approximator");
    }
}

std::vector<double> GreedyQPolicy::values(const StateVector& s) const {
    std::vector<double> q(q_functions_.size());
    for (std::size_t a = 0; a < q.size(); ++a) q[a] = q_functions_[a]->evaluate(s);
    return q;
}

SimplexVector GreedyQPolicy::action_distribution(const StateVector& s) const {
    const auto q = values(s);
    const auto best = static_cast<std::size_t>(std::max_element(q.begin(), q.end()) - q.begin());
    return SimplexVector::vertex(q.size(), best);
}

// ---------------------------------------------------------------------------

namespace {

class CheckpointReader {
public:
    explicit CheckpointReader(std::istream& in) : in_(in) {}

    /// Next `key = value` pair; throws at end of input.
    std::pair<std::string, std::string> next() {
        std::string line;
        while (std::getline(in_, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line.front() == '#') continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw InvalidInput("policy checkpoint: malformed line '" + line + "'");
            return {trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
        }
        throw InvalidInput("policy checkpoint: unexpected end of input");
    }

    std::string expect(const std::string& key) {
        auto [k, v] = next();
        if (k != key) throw InvalidInput("policy checkpoint: expected '" + key + "', found '" + k + "'");
        return v;
    }

    double real(const std::string& key) { return std::stod(expect(key)); }

    std::vector<double> list(const std::string& key) {
        std::istringstream is(expect(key));
        std::vector<double> out;
        std::string token;
        while (is >> token) out.push_back(std::stod(token));
        return out;
    }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    }

    std::istream& in_;
};

Eigen::VectorXd to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
}

std::shared_ptr<const FunctionApproximator> read_approximator(CheckpointReader& reader,
                                                              std::vector<std::shared_ptr<const RbfFeatures>>& feature_cache) {
    const std::string family = reader.expect("family");
    if (family == "linear") {
        const double lengthscale = reader.real("lengthscale");
        const bool bias = reader.real("bias") != 0.0;
        auto centers = reader.list("centers");
        auto beta = reader.list("beta");
        std::shared_ptr<const RbfFeatures> features;
        for (const auto& cached : feature_cache) {
            if (cached->lengthscale() == lengthscale && cached->bias() == bias && cached->centers() == centers) {
                features = cached;
            }
        }
        if (!features) {
            features = std::make_shared<const RbfFeatures>(std::move(centers), lengthscale, bias);
            feature_cache.push_back(features);
        }
        return std::make_shared<LinearApproximator>(features, to_vector(beta));
    }
    if (family == "feedforward") {
        const auto inputs = static_cast<Index>(reader.real("inputs"));
        const auto hidden = static_cast<Index>(reader.real("hidden"));
        FeedforwardApproximator::Weights w;
        w.input_mean = to_vector(reader.list("input_mean"));
        w.input_scale = to_vector(reader.list("input_scale"));
        const auto hw = reader.list("hidden_weights");
        if (static_cast<Index>(hw.size()) != inputs * hidden) throw InvalidInput("policy checkpoint: weight count mismatch");
        w.hidden_weights = Eigen::Map<const Eigen::MatrixXd>(hw.data(), hidden, inputs);
        w.hidden_bias = to_vector(reader.list("hidden_bias"));
        w.output_weights = to_vector(reader.list("output_weights"));
        w.output_bias = reader.real("output_bias");
        w.target_mean = reader.real("target_mean");
        w.target_scale = reader.real("target_scale");
        return std::make_shared<FeedforwardApproximator>(std::move(w));
    }
    throw InvalidInput("policy checkpoint: unknown family " + family);
}

void write_member(std::ostream& out, const Policy& policy) {
    if (const auto* soft = dynamic_cast<const SoftmaxFunctionalPolicy*>(&policy)) {
        out << "kind = softmax\n";
        out << "actions = " << soft->num_actions() << '\n';
        out << "eta = " << format_real(soft->eta()) << '\n';
        for (const auto& f : soft->approximators()) f->write(out);
        return;
    }
    if (const auto* greedy = dynamic_cast<const GreedyQPolicy*>(&policy)) {
        out << "kind = greedy\n";
        out << "actions = " << greedy->num_actions() << '\n';
        for (const auto& f : greedy->q_functions()) f->write(out);
        return;
    }
    if (const auto* fixed = dynamic_cast<const FixedPolicy*>(&policy)) {
        out << "kind = fixed\n";
        out << "actions = " << fixed->num_actions() << '\n';
        const auto w = fixed->action_distribution(StateVector(0.0));
        write_list(out, "weights", w.weights().data(), static_cast<Index>(w.size()));
        return;
    }
    throw InvalidInput("write_policy_checkpoint: unsupported policy type");
}

} // namespace

void write_policy_checkpoint(std::ostream& out, std::span<const std::shared_ptr<const Policy>> members) {
    if (members.empty()) throw InvalidInput("write_policy_checkpoint: no policies");
    out << "members = " << members.size() << '\n';
    for (const auto& member : members) write_member(out, *member);
}

PolicyCheckpoint read_policy_checkpoint(std::istream& in) {
    CheckpointReader reader(in);
    const auto count = static_cast<std::size_t>(reader.real("members"));
    std::vector<std::shared_ptr<const RbfFeatures>> feature_cache;
    PolicyCheckpoint checkpoint;
    for (std::size_t i = 0; i < count; ++i) {
        const std::string kind = reader.expect("kind");
        const auto actions = static_cast<std::size_t>(reader.real("actions"));
        if (kind == "softmax") {
            const double eta = reader.real("eta");
            std::vector<std::shared_ptr<const FunctionApproximator>> fs;
            for (std::size_t a = 0; a < actions; ++a) fs.push_back(read_approximator(reader, feature_cache));
            checkpoint.members.push_back(std::make_shared<SoftmaxFunctionalPolicy>(std::move(fs), eta));
        } else if (kind == "greedy") {
            std::vector<std::shared_ptr<const FunctionApproximator>> fs;
            for (std::size_t a = 0; a < actions; ++a) fs.push_back(read_approximator(reader, feature_cache));
            checkpoint.members.push_back(std::make_shared<GreedyQPolicy>(std::move(fs)));
        } else if (kind == "fixed") {
            checkpoint.members.push_back(std::make_shared<FixedPolicy>(SimplexVector(reader.list("weights"))));
        } else {
            throw InvalidInput("policy checkpoint: unknown kind " + kind);
        }
    }
    return checkpoint;
}

} // namespace moma
