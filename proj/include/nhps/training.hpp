#pragma once

#include "nhps/event.hpp"
#include "nhps/grid.hpp"
#include "nhps/math.hpp"
#include "nhps/missingness.hpp"
#include "nhps/nhp.hpp"
#include "nhps/proposal.hpp"
#include "nhps/rng.hpp"
#include "nhps/smc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nhps {

template <class Params>
Eigen::Index num_parameters(const Params& p) {
    Eigen::Index n = 0;
    for_each_tensor(p, [&](std::string_view, const auto& t) { n += t.size(); });
    return n;
}

template <class Params>
Vector flatten(const Params& p) {
    Vector out(num_parameters(p));
    Eigen::Index off = 0;
    for_each_tensor(p, [&](std::string_view, const auto& t) {
        for (Eigen::Index i = 0; i < t.size(); ++i) out[off + i] = t.data()[i];
        off += t.size();
    });
    return out;
}

template <class Params>
void unflatten(const Vector& v, Params& p) {
    if (v.size() != num_parameters(p)) throw std::invalid_argument("unflatten: size mismatch");
    Eigen::Index off = 0;
    for_each_tensor(p, [&](std::string_view, auto& t) {
        for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = v[off + i];
        off += t.size();
    });
}

/// Throws naming the first non-finite entry, e.g. "V[1,0]".
template <class Params>
void check_finite_params(const Params& p, std::string_view what) {
    for_each_tensor(p, [&](std::string_view name, const auto& t) {
        for (Eigen::Index c = 0; c < t.cols(); ++c)
            for (Eigen::Index r = 0; r < t.rows(); ++r)
                if (!std::isfinite(t(r, c)))
                    throw std::domain_error(std::string(what) + ": non-finite value at " + std::string(name) + "[" +
                                            std::to_string(r) + "," + std::to_string(c) + "]");
    });
}

/// Adam on a flat parameter vector (minimizes).
struct AdamState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long steps = 0;
    Vector m, v;

    void step(Vector& theta, const Vector& grad) {
        if (m.size() != theta.size()) {
            m = Vector::Zero(theta.size());
            v = Vector::Zero(theta.size());
        }
        ++steps;
        m = beta1 * m + (1.0 - beta1) * grad;
        v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(steps));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(steps));
        theta.array() -= learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + epsilon);
    }
};

struct TrainConfig {
    double learning_rate = 1e-3;
    int max_epochs = 30;
    int patience = 3;
    int grid_multiplier = 1;
    int hidden = 32;
    int hidden_reverse = 16;
    double beta = 1.0;           ///< weight on the inclusive divergence
    int exclusive_samples = 1;   ///< z ~ q draws per exclusive-gradient estimate
    double min_scale = 1e-4;     ///< floor for the softplus scales after each step

    void check() const {
        if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("beta must lie in [0, 1]");
        if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
        if (max_epochs < 0 || patience < 1 || grid_multiplier < 1 || exclusive_samples < 1)
            throw std::invalid_argument("invalid training configuration");
    }
};

struct EpochRecord {
    int epoch = 0;
    double train_objective = 0.0;
    double dev_objective = 0.0;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;  ///< epoch 0 is the initial parameters
    int best_epoch = 0;
};

struct ModelGradient {
    double value = 0.0;
    NHPParams grad;
};

/// log_likelihood and its exact gradient (the grid estimate is differentiated as is).
inline ModelGradient grad_log_likelihood(const NHPParams& p, const EventSequence& seq, const TimeGrid& grid) {
    if (auto r = validate(seq, p.num_types, {.allow_equal_times = true}); !r)
        throw ValidationError("grad_log_likelihood: " + r.message);
    ModelGradient out{0.0, p.zeros_like()};
    out.value = detail::log_likelihood_impl(p, seq, grid, &out.grad);
    check_finite(out.value, "log-likelihood");
    check_finite_params(out.grad, "log-likelihood gradient");
    return out;
}

inline void project_scales(NHPParams& p, double floor) {
    for (Eigen::Index k = 0; k < p.s.size(); ++k) p.s[k] = std::max(p.s[k], floor);
}

inline void shuffle(std::vector<std::size_t>& order, Rng& rng) {
    for (std::size_t i = order.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
        std::swap(order[i - 1], order[j]);
    }
}

/// A training example for model fitting: weighted complete sequences (one per
/// distinct particle, or a single complete sequence with weight 1).
using WeightedExample = std::vector<std::pair<EventSequence, double>>;

struct ModelFit {
    NHPParams params;
    TrainLog log;
};

/// Mean over examples of sum_j w_j log p(y_j) on fixed grids drawn from `grid_seed`.
inline double weighted_objective(const NHPParams& p, const std::vector<WeightedExample>& data, std::uint64_t grid_seed,
                                 int grid_multiplier) {
    if (data.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t n = 0; n < data.size(); ++n)
        for (std::size_t j = 0; j < data[n].size(); ++j) {
            Rng rng(derive_seed(grid_seed, "dev-grid", n, j));
            const auto& [seq, w] = data[n][j];
            acc += w * log_likelihood(p, seq, complete_data_grid(seq, rng, grid_multiplier));
        }
    return acc / static_cast<double>(data.size());
}

/// Adam ascent on the weighted complete-data log-likelihood with one example per step,
/// early-stopped on the selection set (dev when non-empty, otherwise train). The
/// returned parameters are the best seen, the initial ones included.
inline ModelFit fit_weighted(const NHPParams& init, const std::vector<WeightedExample>& train,
                             const std::vector<WeightedExample>& dev, const TrainConfig& cfg, std::uint64_t seed,
                             std::uint64_t grid_seed) {
    cfg.check();
    if (train.empty()) throw std::invalid_argument("training: empty dataset");
    const auto& select = dev.empty() ? train : dev;
    Rng rng(seed);
    NHPParams p = init;
    ModelFit fit{init, {}};
    double best = weighted_objective(p, select, grid_seed, cfg.grid_multiplier);
    fit.log.epochs.push_back({0, std::numeric_limits<double>::quiet_NaN(), best});
    AdamState adam;
    adam.learning_rate = cfg.learning_rate;
    Vector theta = flatten(p);
    std::vector<std::size_t> order(train.size());
    int bad = 0;
    for (int epoch = 1; epoch <= cfg.max_epochs && bad < cfg.patience; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle(order, rng);
        double train_acc = 0.0;
        for (std::size_t n : order) {
            NHPParams g = p.zeros_like();
            for (const auto& [seq, w] : train[n]) {
                const TimeGrid grid = complete_data_grid(seq, rng, cfg.grid_multiplier);
                const ModelGradient mg = grad_log_likelihood(p, seq, grid);
                train_acc += w * mg.value;
                Vector acc = flatten(g) + w * flatten(mg.grad);
                unflatten(acc, g);
            }
            adam.step(theta, -flatten(g));
            unflatten(theta, p);
            project_scales(p, cfg.min_scale);
            theta = flatten(p);
        }
        const double dev_obj = weighted_objective(p, select, grid_seed, cfg.grid_multiplier);
        fit.log.epochs.push_back({epoch, train_acc / static_cast<double>(train.size()), dev_obj});
        if (dev_obj > best) {
            best = dev_obj;
            fit.params = p;
            fit.log.best_epoch = epoch;
            bad = 0;
        } else {
            ++bad;
        }
    }
    return fit;
}

inline std::vector<WeightedExample> as_examples(const Dataset& d) {
    std::vector<WeightedExample> out;
    out.reserve(d.size());
    for (const auto& s : d.sequences) out.push_back({{s, 1.0}});
    return out;
}

/// Maximum-likelihood fit on complete sequences. Without `init` the parameters start at
/// init_params drawn from the seed.
inline ModelFit train_model(const Dataset& train, const Dataset& dev, const TrainConfig& cfg, std::uint64_t seed,
                            std::optional<NHPParams> init = std::nullopt) {
    if (train.empty()) throw std::invalid_argument("train_model: empty dataset");
    for (const auto& s : train.sequences)
        if (!s.fully_observed()) throw ValidationError("train_model: training sequences must be complete");
    if (!init) {
        Rng r(derive_seed(seed, "init"));
        init = init_params(train.num_types, cfg.hidden, r);
    }
    return fit_weighted(*init, as_examples(train), as_examples(dev), cfg, derive_seed(seed, "train", 0), seed);
}

struct ProposalGradient {
    double value = 0.0;  ///< the objective whose gradient is returned
    ProposalParams grad;
};

/// Gradient of -log q(z* | x) with respect to the proposal parameters.
inline ProposalGradient grad_inclusive(const Proposal& q, const EventSequence& x, const std::vector<Event>& zstar,
                                       const TimeGrid& grid) {
    for (const Event& e : zstar)
        if (q.rho(e.type) == 0.0)
            throw std::invalid_argument("grad_inclusive: z* contains a type that is never missing");
    ProposalGradient out{0.0, q.params().zeros_like()};
    out.value = -log_q_with_grad(q, x, zstar, grid, out.grad);
    unflatten(Vector(-flatten(out.grad)), out.grad);
    check_finite(out.value, "log q");
    check_finite_params(out.grad, "log q gradient");
    return out;
}

/// Surrogate gradient of the exclusive divergence: the mean over z ~ q of
/// (log q(z|x) - b(z)) grad log q(z|x), with b = log p_model(x + z) + log p_miss.
/// `value` is the mean residual log q - b.
inline ProposalGradient grad_exclusive(const Proposal& q, const EventSequence& x, const TimeGrid& grid, int samples,
                                       Rng& rng) {
    SmcOptions opt;
    opt.particles = samples;
    opt.resample = false;
    opt.seed = rng.next_u64();
    const Ensemble e = run(x, q, opt, grid);
    ProposalGradient out{0.0, q.params().zeros_like()};
    int used = 0;
    Vector acc = Vector::Zero(num_parameters(out.grad));
    for (std::size_t m = 0; m < e.size(); ++m) {
        const double b = e.log_p[m] + e.log_miss[m];
        if (!std::isfinite(b)) continue;
        ProposalParams g = q.params().zeros_like();
        const double lq = log_q_with_grad(q, x, e.particles[m], grid, g);
        const double r = lq - b;
        acc += r * flatten(g);
        out.value += r;
        ++used;
    }
    if (used > 0) {
        acc /= static_cast<double>(used);
        out.value /= static_cast<double>(used);
    }
    unflatten(acc, out.grad);
    return out;
}

struct ProposalFit {
    ProposalParams params;
    TrainLog log;
};

struct CensoredExample {
    EventSequence x;  ///< observed part
    std::vector<Event> zstar;
    TimeGrid grid;
};

inline CensoredExample censor_example(const MissingnessMechanism& mech, const EventSequence& complete, Rng& rng,
                                      int grid_multiplier) {
    const SplitResult s = split(censor(mech, complete, rng));
    TimeGrid grid = TimeGrid::sample(observed_times(s.observed), rng, grid_multiplier);
    return {s.observed, s.missing, std::move(grid)};
}

/// Mean over examples of beta * (-log q(z*|x)) + (1 - beta) * (log q - b) for z ~ q.
inline double proposal_divergence(const Proposal& q, const std::vector<CensoredExample>& data, double beta,
                                  int samples, std::uint64_t seed) {
    if (data.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t n = 0; n < data.size(); ++n) {
        const auto& ex = data[n];
        if (beta > 0.0) acc += beta * -log_q(q, ex.x, ex.zstar, ex.grid);
        if (beta < 1.0) {
            SmcOptions opt;
            opt.particles = samples;
            opt.resample = false;
            opt.seed = derive_seed(seed, "dev-exclusive", n);
            const Ensemble e = run(ex.x, q, opt, ex.grid);
            double r = 0.0;
            int used = 0;
            for (std::size_t m = 0; m < e.size(); ++m) {
                const double b = e.log_p[m] + e.log_miss[m];
                if (!std::isfinite(b)) continue;
                r += e.log_q[m] - b;
                ++used;
            }
            if (used) acc += (1.0 - beta) * r / used;
        }
    }
    return acc / static_cast<double>(data.size());
}

/// Fits the proposal to a frozen model: each visit censors the complete sequence once
/// with the known mechanism and takes an Adam step on the beta-mixed divergence.
/// Early-stopped on the dev divergence, whose censoring and grids are fixed.
inline ProposalFit train_proposal(const NHPParams& model, const MissingnessMechanism& mech, const Dataset& train,
                                  const Dataset& dev, const TrainConfig& cfg, std::uint64_t seed,
                                  std::optional<ProposalParams> init = std::nullopt) {
    cfg.check();
    if (train.empty()) throw std::invalid_argument("train_proposal: empty dataset");
    if (!init) {
        Rng r(derive_seed(seed, "init-proposal"));
        init = init_proposal(model.num_types, model.hidden(), cfg.hidden_reverse, r);
    }
    std::vector<CensoredExample> dev_ex;
    const Dataset& select = dev.empty() ? train : dev;
    for (std::size_t n = 0; n < select.size(); ++n) {
        Rng r(derive_seed(seed, "dev-censor", n));
        dev_ex.push_back(censor_example(mech, select.sequences[n], r, cfg.grid_multiplier));
    }
    ProposalParams phi = *init;
    ProposalFit fit{phi, {}};
    auto divergence = [&](const ProposalParams& p) {
        const Proposal q = Proposal::smoothing(model, p, mech);
        return proposal_divergence(q, dev_ex, cfg.beta, cfg.exclusive_samples, seed);
    };
    double best = divergence(phi);
    fit.log.epochs.push_back({0, std::numeric_limits<double>::quiet_NaN(), best});

    Rng rng(derive_seed(seed, "train-proposal"));
    AdamState adam;
    adam.learning_rate = cfg.learning_rate;
    Vector theta = flatten(phi);
    std::vector<std::size_t> order(train.size());
    int bad = 0;
    for (int epoch = 1; epoch <= cfg.max_epochs && bad < cfg.patience; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle(order, rng);
        double train_acc = 0.0;
        for (std::size_t n : order) {
            const CensoredExample ex = censor_example(mech, train.sequences[n], rng, cfg.grid_multiplier);
            const Proposal q = Proposal::smoothing(model, phi, mech);
            Vector g = Vector::Zero(theta.size());
            if (cfg.beta > 0.0) {
                const ProposalGradient gi = grad_inclusive(q, ex.x, ex.zstar, ex.grid);
                g += cfg.beta * flatten(gi.grad);
                train_acc += cfg.beta * gi.value;
            }
            if (cfg.beta < 1.0) {
                const ProposalGradient ge = grad_exclusive(q, ex.x, ex.grid, cfg.exclusive_samples, rng);
                g += (1.0 - cfg.beta) * flatten(ge.grad);
                train_acc += (1.0 - cfg.beta) * ge.value;
            }
            adam.step(theta, g);
            unflatten(theta, phi);
        }
        const double d = divergence(phi);
        fit.log.epochs.push_back({epoch, train_acc / static_cast<double>(train.size()), d});
        if (d < best) {
            best = d;
            fit.params = phi;
            fit.log.best_epoch = epoch;
            bad = 0;
        } else {
            ++bad;
        }
    }
    return fit;
}

struct McemConfig {
    int rounds = 5;
    int particles = 20;
    bool smooth = false;
    bool resample = true;
    TrainConfig train;  ///< M-step (and proposal refresh) settings
};

struct McemRound {
    int round = 0;
    double objective_before = 0.0;  ///< weighted complete-data log-likelihood at the round's particles
    double objective_after = 0.0;
    double mean_ess = 0.0;
    TrainLog mstep;
};

struct McemFit {
    NHPParams params;
    std::vector<McemRound> rounds;
};

/// Collapses identical particles (summing their weights) into weighted complete sequences.
inline WeightedExample weighted_completions(const EventSequence& x, const Ensemble& e) {
    std::vector<std::pair<std::vector<Event>, double>> uniq;
    for (std::size_t m = 0; m < e.size(); ++m) {
        if (e.weights[m] == 0.0) continue;
        auto it = std::find_if(uniq.begin(), uniq.end(), [&](const auto& u) { return u.first == e.particles[m]; });
        if (it == uniq.end())
            uniq.emplace_back(e.particles[m], e.weights[m]);
        else
            it->second += e.weights[m];
    }
    WeightedExample out;
    for (auto& [z, w] : uniq) out.emplace_back(merge(x, z), uniq.size() == 1 ? 1.0 : w);
    return out;
}

/// Monte Carlo EM with a known mechanism. Each round imputes every sequence with SMC
/// (E-step), then ascends the particle-weighted complete-data log-likelihood (M-step).
/// With smoothing, the proposal is refit once per round on the previous round's
/// imputations, censored by the mechanism; the first round uses the filtering proposal.
inline McemFit mcem(const NHPParams& init, const MissingnessMechanism& mech, const Dataset& train, const Dataset& dev,
                    const McemConfig& cfg, std::uint64_t seed) {
    if (train.empty()) throw std::invalid_argument("mcem: empty dataset");
    auto observed_part = [](const Dataset& d) {
        std::vector<EventSequence> xs;
        for (const auto& s : d.sequences) xs.push_back(split(s).observed);
        return xs;
    };
    const auto xs_train = observed_part(train);
    const auto xs_dev = observed_part(dev);
    McemFit fit{init, {}};
    std::optional<ProposalParams> phi;
    Dataset imputed_train{train.num_types, {}, SplitTag::train};
    Dataset imputed_dev{train.num_types, {}, SplitTag::dev};

    for (int r = 0; r < cfg.rounds; ++r) {
        McemRound rec;
        rec.round = r;
        if (cfg.smooth && !imputed_train.empty()) {
            TrainConfig pc = cfg.train;
            phi = train_proposal(fit.params, mech, imputed_train, imputed_dev, pc, derive_seed(seed, "proposal", r), phi)
                      .params;
        }
        const Proposal q = phi ? Proposal::smoothing(fit.params, *phi, mech) : Proposal::filtering(fit.params, mech);
        auto estep = [&](const std::vector<EventSequence>& xs, std::string_view label, Dataset& imputed) {
            std::vector<WeightedExample> out;
            imputed.sequences.clear();
            double ess_acc = 0.0;
            for (std::size_t n = 0; n < xs.size(); ++n) {
                SmcOptions opt;
                opt.particles = cfg.particles;
                opt.resample = cfg.resample;
                opt.seed = derive_seed(seed, label, static_cast<std::uint64_t>(r), n);
                opt.grid_multiplier = cfg.train.grid_multiplier;
                const Ensemble e = run(xs[n], q, opt);
                ess_acc += ess(e.weights);
                out.push_back(weighted_completions(xs[n], e));
                Rng pick(derive_seed(seed, "impute-pick", static_cast<std::uint64_t>(r), n));
                const std::size_t m = multinomial_indices(e.weights, 1, pick)[0];
                EventSequence y = merge(xs[n], e.particles[m]);
                std::vector<Event> all = y.events();
                for (Event& ev : all) ev.observed = true;
                imputed.sequences.emplace_back(y.horizon(), y.num_types(), std::move(all));
            }
            return std::pair{std::move(out), xs.empty() ? 0.0 : ess_acc / static_cast<double>(xs.size())};
        };
        auto [ex_train, ess_train] = estep(xs_train, "estep", imputed_train);
        auto [ex_dev, ess_dev] = estep(xs_dev, "estep-dev", imputed_dev);
        (void)ess_dev;
        rec.mean_ess = ess_train;
        ModelFit mf = fit_weighted(fit.params, ex_train, ex_dev, cfg.train, derive_seed(seed, "train", r), seed);
        rec.objective_before = mf.log.epochs.front().dev_objective;
        rec.objective_after = mf.log.epochs[static_cast<std::size_t>(mf.log.best_epoch)].dev_objective;
        rec.mstep = std::move(mf.log);
        fit.params = std::move(mf.params);
        fit.rounds.push_back(std::move(rec));
    }
    return fit;
}

}  // namespace nhps
