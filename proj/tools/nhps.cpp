// nhps: command-line front end for missing-event imputation.

#include "nhps/nhps.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace nhps;
namespace fs = std::filesystem;

namespace {

/// JSON config files: {"particles": 50, "cost": [0.5, 1]} applies to the invoked
/// subcommand; {"impute": {...}} targets one explicitly. Keys may use '_' for '-'.
class JsonConfig : public CLI::Config {
public:
    explicit JsonConfig(std::string active) : active_(std::move(active)) {}

    std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}\n"; }

    std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
        json j;
        try {
            j = json::parse(in);
        } catch (const json::parse_error& e) {
            throw CLI::ConversionError(std::string("config: ") + e.what());
        }
        if (!j.is_object()) throw CLI::ConversionError("config: top level must be an object");
        std::vector<CLI::ConfigItem> items;
        std::vector<std::string> parents;
        if (!active_.empty()) parents.push_back(active_);
        collect(j, parents, items);
        return items;
    }

private:
    static std::string scalar(const json& v) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        if (v.is_number() || v.is_null()) return v.dump();
        throw CLI::ConversionError("config: unsupported value " + v.dump());
    }

    void collect(const json& j, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& out) const {
        for (const auto& [key, v] : j.items()) {
            std::string name = key;
            std::replace(name.begin(), name.end(), '_', '-');
            if (v.is_object()) {
                collect(v, {name}, out);
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = name;
            if (v.is_array())
                for (const json& e : v) item.inputs.push_back(scalar(e));
            else
                item.inputs.push_back(scalar(v));
            out.push_back(std::move(item));
        }
    }

    std::string active_;
};

std::string num(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    return out;
}

/// Runs f(i) for i in [0, n) on up to `threads` workers. Callers write results into
/// per-index slots so output order never depends on scheduling.
template <class F>
void parallel_for(std::size_t n, int threads, F&& f) {
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next++) < n;) {
                try {
                    f(i);
                } catch (...) {
                    std::lock_guard lock(err_mu);
                    if (!err) err = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

struct MechanismFlags {
    std::optional<double> rho_all;
    std::vector<double> rho;
    std::vector<int> missing_types;
    std::string file;

    void add(CLI::App* sub) {
        auto* a = sub->add_option("--rho-all", rho_all, "missing probability shared by every type");
        auto* b = sub->add_option("--rho", rho, "per-type missing probabilities")->expected(1, -1);
        auto* c = sub->add_option("--missing-types", missing_types, "types that are always missing")->expected(1, -1);
        auto* d = sub->add_option("--mechanism", file, "JSON mechanism file");
        a->excludes(b)->excludes(c)->excludes(d);
        b->excludes(c)->excludes(d);
        c->excludes(d);
    }

    bool given() const { return rho_all || !rho.empty() || !missing_types.empty() || !file.empty(); }

    MissingnessMechanism build(int K) const {
        if (!given()) throw ValidationError("a missingness mechanism is required (--rho-all, --rho, --missing-types or --mechanism)");
        try {
            if (rho_all) return MissingnessMechanism::uniform(K, *rho_all);
            if (!rho.empty()) {
                if (static_cast<int>(rho.size()) != K) throw ValidationError("--rho needs one value per type");
                return MissingnessMechanism(rho);
            }
            if (!missing_types.empty()) return MissingnessMechanism::deterministic(K, missing_types);
        } catch (const ValidationError&) {
            throw;
        } catch (const std::invalid_argument& e) {
            throw ValidationError(e.what());
        }
        return mechanism_from_json(read_json_file(file), K);
    }
};

void add_train_flags(CLI::App* sub, TrainConfig& c, bool proposal) {
    sub->add_option("--lr", c.learning_rate, "Adam learning rate")->capture_default_str();
    sub->add_option("--max-epochs", c.max_epochs)->capture_default_str();
    sub->add_option("--patience", c.patience, "epochs without dev improvement before stopping")->capture_default_str();
    sub->add_option("--grid-multiplier", c.grid_multiplier, "integration grid density")->capture_default_str();
    sub->add_option("--hidden", c.hidden, "model hidden size D")->capture_default_str();
    sub->add_option("--min-scale", c.min_scale, "floor for the softplus scales")->capture_default_str();
    if (proposal) {
        sub->add_option("--hidden-reverse", c.hidden_reverse, "reverse LSTM hidden size D'")->capture_default_str();
        sub->add_option("--beta", c.beta, "weight of the inclusive divergence")->capture_default_str();
        sub->add_option("--exclusive-samples", c.exclusive_samples)->capture_default_str();
    }
}

void write_log(const std::string& path, const TrainLog& log) {
    if (path.empty()) return;
    auto out = open_out(path);
    out << "epoch,train_objective,dev_objective,best\n";
    for (const auto& e : log.epochs)
        out << e.epoch << ',' << (e.epoch == 0 ? std::string() : num(e.train_objective)) << ',' << num(e.dev_objective)
            << ',' << (e.epoch == log.best_epoch ? 1 : 0) << '\n';
}

Dataset load_data(const std::string& path, SplitTag tag = SplitTag::train) {
    return path.empty() ? Dataset{} : read_dataset(path, tag);
}

void check_types(const Dataset& d, int K, const std::string& what) {
    if (!d.empty() && d.num_types != K)
        throw ValidationError(what + " has K=" + std::to_string(d.num_types) + " but the model has K=" + std::to_string(K));
}

/// Sequences for evaluation carry z* as their unobserved events.
std::vector<SplitResult> split_all(const Dataset& d) {
    std::vector<SplitResult> out;
    for (const auto& s : d.sequences) out.push_back(split(s));
    return out;
}

std::vector<Event> missing_events(const json& events) {
    std::vector<Event> z;
    for (const json& e : events)
        if (!e.value("obs", false)) z.push_back({e.at("k").get<int>(), e.at("t").get<double>(), false});
    return z;
}

std::vector<std::vector<Event>> read_event_lists(const std::string& path, bool missing_only) {
    std::vector<std::vector<Event>> out;
    for_each_ndjson(path, [&](std::size_t n, const json& j) {
        try {
            const json& ev = j.at("events");
            out.push_back(missing_only ? missing_events(ev) : events_from_json(ev));
        } catch (const json::exception& e) {
            throw ValidationError(path + ":" + std::to_string(n) + ": " + e.what());
        }
    });
    return out;
}

/// Pareto point of decodes against references: both totals divided by sum |z*|.
struct DecodeScore {
    double insertions_deletions = 0.0;
    double movement = 0.0;
    double total = 0.0;
};

DecodeScore score_decodes(const std::vector<std::vector<Event>>& pred, const std::vector<std::vector<Event>>& ref,
                          double C) {
    const CostConfig cost = CostConfig::symmetric(C);
    double ins_del = 0.0, move = 0.0, dist = 0.0, denom = 0.0;
    for (std::size_t n = 0; n < ref.size(); ++n) {
        const OtdBreakdown b = otd_breakdown(pred[n], ref[n], cost);
        ins_del += static_cast<double>(b.unaligned);
        move += b.movement;
        dist += b.distance;
        denom += static_cast<double>(ref[n].size());
    }
    if (denom == 0.0) throw ValidationError("references hold no missing events");
    return {ins_del / denom, move / denom, dist / denom};
}

// ---------------------------------------------------------------- subcommands

struct GenOpts {
    std::string out_dir;
    int num_types = 4, num_models = 1, hidden = 32;
    std::size_t train_size = 5000, dev_size = 500, test_size = 500;
    int min_length = 11, max_length = 20;
    std::uint64_t seed = 0;
};

int cmd_gen_synthetic(const GenOpts& o) {
    if (o.num_types < 1 || o.num_models < 1 || o.hidden < 1) throw ValidationError("sizes must be positive");
    if (o.min_length < 1 || o.max_length < o.min_length) throw ValidationError("invalid length range");
    for (int i = 0; i < o.num_models; ++i) {
        const fs::path dir = fs::path(o.out_dir) / ("model_" + std::to_string(i));
        fs::create_directories(dir);
        Rng truth_rng(derive_seed(o.seed, "truth", static_cast<std::uint64_t>(i)));
        const NHPParams truth = random_ground_truth(o.num_types, o.hidden, truth_rng);
        save_checkpoint((dir / "truth.json").string(), truth);
        const std::pair<const char*, std::size_t> splits[] = {
            {"train", o.train_size}, {"dev", o.dev_size}, {"test", o.test_size}};
        for (const auto& [name, size] : splits) {
            Dataset d{o.num_types, {}, SplitTag::train};
            for (std::size_t n = 0; n < size; ++n) {
                Rng rng(derive_seed(o.seed, name, static_cast<std::uint64_t>(i), n));
                const int I = static_cast<int>(rng.uniform_int(o.min_length, o.max_length));
                d.sequences.push_back(sample_prior(truth, EventCount{I}, rng));
            }
            write_dataset((dir / (std::string(name) + ".ndjson")).string(), d);
        }
    }
    return 0;
}

struct CensorOpts {
    std::string data, out;
    MechanismFlags mech;
    std::uint64_t seed = 0;
};

int cmd_censor(const CensorOpts& o) {
    const Dataset d = read_dataset(o.data);
    const MissingnessMechanism mech = o.mech.build(d.num_types);
    Dataset out{d.num_types, {}, d.tag};
    for (std::size_t n = 0; n < d.size(); ++n) {
        if (!d.sequences[n].fully_observed())
            throw ValidationError(o.data + ":" + std::to_string(n + 1) + ": censor needs complete sequences");
        Rng rng(derive_seed(o.seed, "censor", n));
        out.sequences.push_back(censor(mech, d.sequences[n], rng));
    }
    write_dataset(o.out, out);
    return 0;
}

struct TrainModelOpts {
    std::string train, dev, init, out, log;
    TrainConfig cfg;
    std::uint64_t seed = 0;
};

int cmd_train_model(const TrainModelOpts& o) {
    const Dataset train = read_dataset(o.train);
    const Dataset dev = load_data(o.dev, SplitTag::dev);
    check_types(dev, train.num_types, "dev data");
    std::optional<NHPParams> init;
    if (!o.init.empty()) {
        init = load_model(o.init);
        check_types(train, init->num_types, "training data");
    }
    const ModelFit fit = train_model(train, dev, o.cfg, o.seed, init);
    save_checkpoint(o.out, fit.params);
    write_log(o.log, fit.log);
    return 0;
}

struct TrainProposalOpts {
    std::string model, train, dev, init, out, log;
    MechanismFlags mech;
    TrainConfig cfg;
    std::uint64_t seed = 0;
};

int cmd_train_proposal(const TrainProposalOpts& o) {
    const NHPParams model = load_model(o.model);
    const Dataset train = read_dataset(o.train);
    const Dataset dev = load_data(o.dev, SplitTag::dev);
    check_types(train, model.num_types, "training data");
    check_types(dev, model.num_types, "dev data");
    for (const Dataset* d : {&train, &dev})
        for (const auto& s : d->sequences)
            if (!s.fully_observed()) throw ValidationError("train-proposal needs complete sequences");
    const MissingnessMechanism mech = o.mech.build(model.num_types);
    std::optional<ProposalParams> init;
    if (!o.init.empty()) init = load_proposal(o.init);
    const ProposalFit fit = train_proposal(model, mech, train, dev, o.cfg, o.seed, init);
    save_checkpoint(o.out, fit.params);
    write_log(o.log, fit.log);
    return 0;
}

struct ImputeOpts {
    std::string model, proposal, data, out;
    MechanismFlags mech;
    int particles = 50, grid_multiplier = 1, threads = 1;
    bool no_resample = false;
    std::uint64_t seed = 0;
};

struct Artifacts {
    NHPParams model;
    std::optional<ProposalParams> phi;
    MissingnessMechanism mech;

    Proposal filtering() const { return Proposal::filtering(model, mech); }
    Proposal smoothing() const { return Proposal::smoothing(model, *phi, mech); }
    Proposal best() const { return phi ? smoothing() : filtering(); }
};

Artifacts load_artifacts(const std::string& model_path, const std::string& proposal_path, const MechanismFlags& mf) {
    NHPParams model = load_model(model_path);
    std::optional<ProposalParams> phi;
    if (!proposal_path.empty()) {
        phi = load_proposal(proposal_path);
        if (phi->num_types != model.num_types || phi->model_hidden() != model.hidden())
            throw ValidationError("proposal checkpoint does not match the model's K or D");
    }
    MissingnessMechanism mech = mf.build(model.num_types);
    return {std::move(model), std::move(phi), std::move(mech)};
}

int cmd_impute(const ImputeOpts& o) {
    const Artifacts a = load_artifacts(o.model, o.proposal, o.mech);
    const Dataset d = read_dataset(o.data);
    check_types(d, a.model.num_types, "data");
    const Proposal q = a.best();
    std::vector<EventSequence> xs;
    for (const auto& s : d.sequences) xs.push_back(split(s).observed);
    std::vector<std::string> lines(xs.size());
    parallel_for(xs.size(), o.threads, [&](std::size_t n) {
        SmcOptions opt;
        opt.particles = o.particles;
        opt.resample = !o.no_resample;
        opt.grid_multiplier = o.grid_multiplier;
        opt.seed = derive_seed(o.seed, "impute", n);
        lines[n] = ensemble_to_json(to_record(n, run(xs[n], q, opt))).dump();
    });
    auto out = open_out(o.out);
    for (const auto& l : lines) out << l << '\n';
    return 0;
}

struct DecodeOpts {
    std::string ensembles, out;
    std::vector<double> costs{1.0};
};

int cmd_decode(const DecodeOpts& o) {
    const auto ens = read_ensembles(o.ensembles);
    auto out = open_out(o.out);
    for (double C : o.costs) {
        const CostConfig cost = CostConfig::symmetric(C);
        for (const auto& e : ens)
            out << decode_to_json({e.id, C, consensus_decode(e.particles, e.weights, cost)}).dump() << '\n';
    }
    return 0;
}

struct OtdOpts {
    std::string pred, ref, out;
    double cost = 1.0;
    bool missing_only = false;
};

int cmd_otd(const OtdOpts& o) {
    const auto pred = read_event_lists(o.pred, o.missing_only);
    const auto ref = read_event_lists(o.ref, o.missing_only);
    if (pred.size() != ref.size())
        throw ValidationError("prediction and reference files hold " + std::to_string(pred.size()) + " and " +
                              std::to_string(ref.size()) + " lines");
    const CostConfig cost = CostConfig::symmetric(o.cost);
    cost.check();
    std::ostringstream os;
    os << "id,distance,unaligned,movement\n";
    for (std::size_t n = 0; n < pred.size(); ++n) {
        const OtdBreakdown b = otd_breakdown(pred[n], ref[n], cost);
        os << n << ',' << num(b.distance) << ',' << b.unaligned << ',' << num(b.movement) << '\n';
    }
    if (o.out.empty())
        std::cout << os.str();
    else
        open_out(o.out) << os.str();
    return 0;
}

struct EvalProposalOpts {
    std::string model, proposal, data, out;
    MechanismFlags mech;
    int grid_multiplier = 1;
    std::uint64_t seed = 0;
};

int cmd_evaluate_proposal(const EvalProposalOpts& o) {
    const Artifacts a = load_artifacts(o.model, o.proposal, o.mech);
    const Dataset d = read_dataset(o.data, SplitTag::test);
    check_types(d, a.model.num_types, "data");
    const Proposal qf = a.filtering();
    std::optional<Proposal> qs;
    if (a.phi) qs = a.smoothing();
    auto out = open_out(o.out);
    out << "id,num_missing,filter,smooth\n";
    std::size_t skipped = 0;
    for (std::size_t n = 0; n < d.size(); ++n) {
        const SplitResult s = split(d.sequences[n]);
        if (s.missing.empty()) {
            ++skipped;
            continue;
        }
        Rng rng(derive_seed(o.seed, "grid", n));
        const TimeGrid grid = TimeGrid::sample(observed_times(s.observed), rng, o.grid_multiplier);
        const double card = static_cast<double>(s.missing.size());
        out << n << ',' << s.missing.size() << ',' << num(log_q(qf, s.observed, s.missing, grid) / card) << ',';
        if (qs) out << num(log_q(*qs, s.observed, s.missing, grid) / card);
        out << '\n';
    }
    if (skipped) std::cerr << "note: skipped " << skipped << " sequence(s) with no missing events\n";
    return 0;
}

struct EvalDecodeOpts {
    std::string decodes, refs, out;
};

int cmd_evaluate_decode(const EvalDecodeOpts& o) {
    const auto decodes = read_decodes(o.decodes);
    std::vector<std::vector<Event>> ref;
    for (const auto& s : split_all(read_dataset(o.refs, SplitTag::test))) ref.push_back(s.missing);
    std::map<double, std::vector<std::optional<std::vector<Event>>>> by_cost;
    for (const auto& d : decodes) {
        if (d.id >= ref.size())
            throw ValidationError("decode id " + std::to_string(d.id) + " has no reference sequence");
        auto& slot = by_cost.try_emplace(d.C, ref.size()).first->second;
        if (slot[d.id]) throw ValidationError("duplicate decode for id " + std::to_string(d.id) + " at C=" + num(d.C));
        slot[d.id] = d.events;
    }
    auto out = open_out(o.out);
    out << "C,insertions_deletions,movement,total\n";
    for (const auto& [C, slots] : by_cost) {
        std::vector<std::vector<Event>> pred;
        for (std::size_t n = 0; n < slots.size(); ++n) {
            if (!slots[n]) throw ValidationError("no decode for id " + std::to_string(n) + " at C=" + num(C));
            pred.push_back(*slots[n]);
        }
        const DecodeScore s = score_decodes(pred, ref, C);
        out << num(C) << ',' << num(s.insertions_deletions) << ',' << num(s.movement) << ',' << num(s.total) << '\n';
    }
    return 0;
}

struct SweepOpts {
    std::string model, data, train, dev, out;
    std::vector<double> rhos{0.1, 0.3, 0.5, 0.7, 0.9};
    std::vector<double> costs{1.0};
    int particles = 50, threads = 1;
    bool no_resample = false;
    TrainConfig cfg;
    std::uint64_t seed = 0;
};

int cmd_sweep_rho(const SweepOpts& o) {
    const NHPParams model = load_model(o.model);
    const Dataset test = read_dataset(o.data, SplitTag::test);
    check_types(test, model.num_types, "data");
    const Dataset train = load_data(o.train);
    const Dataset dev = load_data(o.dev, SplitTag::dev);
    check_types(train, model.num_types, "training data");
    for (const auto& s : test.sequences)
        if (!s.fully_observed()) throw ValidationError("sweep-rho censors complete test sequences itself");
    auto out = open_out(o.out);
    out << "rho,method,C,insertions_deletions,movement,total\n";
    for (std::size_t r = 0; r < o.rhos.size(); ++r) {
        const MissingnessMechanism mech = MissingnessMechanism::uniform(model.num_types, o.rhos[r]);
        std::vector<EventSequence> xs;
        std::vector<std::vector<Event>> ref;
        for (std::size_t n = 0; n < test.size(); ++n) {
            Rng rng(derive_seed(o.seed, "sweep-censor", r, n));
            SplitResult s = split(censor(mech, test.sequences[n], rng));
            xs.push_back(std::move(s.observed));
            ref.push_back(std::move(s.missing));
        }
        std::vector<std::pair<std::string, Proposal>> methods{{"filter", Proposal::filtering(model, mech)}};
        std::optional<ProposalParams> phi;
        if (!train.empty()) {
            phi = train_proposal(model, mech, train, dev, o.cfg, derive_seed(o.seed, "sweep-proposal", r)).params;
            methods.emplace_back("smooth", Proposal::smoothing(model, *phi, mech));
        }
        for (const auto& [name, q] : methods) {
            std::vector<Ensemble> ens(xs.size());
            parallel_for(xs.size(), o.threads, [&](std::size_t n) {
                SmcOptions opt;
                opt.particles = o.particles;
                opt.resample = !o.no_resample;
                opt.grid_multiplier = o.cfg.grid_multiplier;
                opt.seed = derive_seed(o.seed, "sweep-impute", r, n);
                ens[n] = run(xs[n], q, opt);
            });
            for (double C : o.costs) {
                std::vector<std::vector<Event>> pred;
                for (const auto& e : ens) pred.push_back(consensus_decode(e, CostConfig::symmetric(C)));
                const DecodeScore s = score_decodes(pred, ref, C);
                out << num(o.rhos[r]) << ',' << name << ',' << num(C) << ',' << num(s.insertions_deletions) << ','
                    << num(s.movement) << ',' << num(s.total) << '\n';
            }
        }
    }
    return 0;
}

struct McemOpts {
    std::string train, dev, model_init, out, log;
    MechanismFlags mech;
    McemConfig cfg;
    bool no_resample = false;
    std::uint64_t seed = 0;
};

int cmd_mcem(McemOpts o) {
    const Dataset train = read_dataset(o.train);
    const Dataset dev = load_data(o.dev, SplitTag::dev);
    check_types(dev, train.num_types, "dev data");
    NHPParams init;
    if (!o.model_init.empty()) {
        init = load_model(o.model_init);
        check_types(train, init.num_types, "training data");
    } else {
        Rng r(derive_seed(o.seed, "init"));
        init = init_params(train.num_types, o.cfg.train.hidden, r);
    }
    const MissingnessMechanism mech = o.mech.build(train.num_types);
    o.cfg.resample = !o.no_resample;
    const McemFit fit = mcem(init, mech, train, dev, o.cfg, o.seed);
    save_checkpoint(o.out, fit.params);
    if (!o.log.empty()) {
        auto out = open_out(o.log);
        out << "round,objective_before,objective_after,mean_ess,mstep_epochs\n";
        for (const auto& r : fit.rounds)
            out << r.round << ',' << num(r.objective_before) << ',' << num(r.objective_after) << ',' << num(r.mean_ess)
                << ',' << r.mstep.epochs.size() - 1 << '\n';
    }
    return 0;
}

std::string active_subcommand(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--config") {
            ++i;
            continue;
        }
        if (!a.empty() && a[0] != '-') return a;
    }
    return {};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Missing-event imputation with neural Hawkes particle smoothing"};
    app.require_subcommand(1);
    app.config_formatter(std::make_shared<JsonConfig>(active_subcommand(argc, argv)));
    app.set_config("--config", "", "JSON file of flag overrides");
    app.allow_config_extras(CLI::config_extras_mode::error);

    auto seed_flag = [](CLI::App* s, std::uint64_t& seed) {
        s->add_option("--seed", seed, "master random seed")->required();
    };

    GenOpts gen;
    auto* s_gen = app.add_subcommand("gen-synthetic", "sample ground-truth models and complete datasets");
    s_gen->add_option("--out-dir", gen.out_dir)->required();
    s_gen->add_option("--num-types", gen.num_types)->capture_default_str();
    s_gen->add_option("--num-models", gen.num_models)->capture_default_str();
    s_gen->add_option("--train-size", gen.train_size)->capture_default_str();
    s_gen->add_option("--dev-size", gen.dev_size)->capture_default_str();
    s_gen->add_option("--test-size", gen.test_size)->capture_default_str();
    s_gen->add_option("--min-length", gen.min_length)->capture_default_str();
    s_gen->add_option("--max-length", gen.max_length)->capture_default_str();
    s_gen->add_option("--hidden", gen.hidden)->capture_default_str();
    seed_flag(s_gen, gen.seed);

    CensorOpts cen;
    auto* s_cen = app.add_subcommand("censor", "mark events missing under a mechanism");
    s_cen->add_option("--data", cen.data)->required();
    s_cen->add_option("--out", cen.out)->required();
    cen.mech.add(s_cen);
    seed_flag(s_cen, cen.seed);

    TrainModelOpts tm;
    auto* s_tm = app.add_subcommand("train-model", "fit the neural Hawkes model on complete data");
    s_tm->add_option("--train", tm.train)->required();
    s_tm->add_option("--dev", tm.dev);
    s_tm->add_option("--init", tm.init, "starting checkpoint");
    s_tm->add_option("--out", tm.out)->required();
    s_tm->add_option("--log", tm.log, "per-epoch CSV");
    add_train_flags(s_tm, tm.cfg, false);
    seed_flag(s_tm, tm.seed);

    TrainProposalOpts tp;
    auto* s_tp = app.add_subcommand("train-proposal", "fit the smoothing proposal to a frozen model");
    s_tp->add_option("--model", tp.model)->required();
    s_tp->add_option("--train", tp.train)->required();
    s_tp->add_option("--dev", tp.dev);
    s_tp->add_option("--init", tp.init, "starting proposal checkpoint");
    s_tp->add_option("--out", tp.out)->required();
    s_tp->add_option("--log", tp.log, "per-epoch CSV");
    tp.mech.add(s_tp);
    add_train_flags(s_tp, tp.cfg, true);
    seed_flag(s_tp, tp.seed);

    ImputeOpts im;
    auto* s_im = app.add_subcommand("impute", "draw particle ensembles of the missing events");
    s_im->add_option("--model", im.model)->required();
    s_im->add_option("--proposal", im.proposal, "smoothing proposal; filtering when omitted");
    s_im->add_option("--data", im.data, "sequences; unobserved events are ignored")->required();
    s_im->add_option("--out", im.out)->required();
    s_im->add_option("--particles", im.particles)->capture_default_str();
    s_im->add_flag("--no-resample", im.no_resample);
    s_im->add_option("--grid-multiplier", im.grid_multiplier)->capture_default_str();
    s_im->add_option("--threads", im.threads)->capture_default_str();
    im.mech.add(s_im);
    seed_flag(s_im, im.seed);

    DecodeOpts de;
    auto* s_de = app.add_subcommand("decode", "consensus decode of each ensemble");
    s_de->add_option("--ensembles", de.ensembles)->required();
    s_de->add_option("--out", de.out)->required();
    s_de->add_option("--cost", de.costs, "insertion/deletion cost C; repeatable")->expected(1, -1)->capture_default_str();

    OtdOpts ot;
    auto* s_ot = app.add_subcommand("otd", "optimal transport distance between paired sequences");
    s_ot->add_option("--pred", ot.pred)->required();
    s_ot->add_option("--ref", ot.ref)->required();
    s_ot->add_option("--out", ot.out, "CSV path; stdout when omitted");
    s_ot->add_option("--cost", ot.cost)->capture_default_str();
    s_ot->add_flag("--missing-only", ot.missing_only, "compare only unobserved events");

    EvalProposalOpts ep;
    auto* s_ep = app.add_subcommand("evaluate-proposal", "log q(z*|x)/|z*| under filtering and smoothing");
    s_ep->add_option("--model", ep.model)->required();
    s_ep->add_option("--proposal", ep.proposal);
    s_ep->add_option("--data", ep.data, "censored test sequences")->required();
    s_ep->add_option("--out", ep.out)->required();
    s_ep->add_option("--grid-multiplier", ep.grid_multiplier)->capture_default_str();
    ep.mech.add(s_ep);
    seed_flag(s_ep, ep.seed);

    EvalDecodeOpts ed;
    auto* s_ed = app.add_subcommand("evaluate-decode", "normalized insertion/deletion and movement per C");
    s_ed->add_option("--decodes", ed.decodes)->required();
    s_ed->add_option("--refs", ed.refs, "censored test sequences")->required();
    s_ed->add_option("--out", ed.out)->required();

    SweepOpts sw;
    auto* s_sw = app.add_subcommand("sweep-rho", "decode quality across missing rates");
    s_sw->add_option("--model", sw.model)->required();
    s_sw->add_option("--data", sw.data, "complete test sequences")->required();
    s_sw->add_option("--train", sw.train, "complete training data for the smoothing proposal");
    s_sw->add_option("--dev", sw.dev);
    s_sw->add_option("--out", sw.out)->required();
    s_sw->add_option("--rho-values", sw.rhos)->expected(1, -1)->capture_default_str();
    s_sw->add_option("--cost", sw.costs)->expected(1, -1)->capture_default_str();
    s_sw->add_option("--particles", sw.particles)->capture_default_str();
    s_sw->add_flag("--no-resample", sw.no_resample);
    s_sw->add_option("--threads", sw.threads)->capture_default_str();
    add_train_flags(s_sw, sw.cfg, true);
    seed_flag(s_sw, sw.seed);

    McemOpts mc;
    auto* s_mc = app.add_subcommand("mcem", "fit the model to incomplete data by Monte Carlo EM");
    s_mc->add_option("--train", mc.train, "censored training sequences")->required();
    s_mc->add_option("--dev", mc.dev);
    s_mc->add_option("--model-init", mc.model_init);
    s_mc->add_option("--out", mc.out)->required();
    s_mc->add_option("--log", mc.log, "per-round CSV");
    s_mc->add_option("--rounds", mc.cfg.rounds)->capture_default_str();
    s_mc->add_option("--particles", mc.cfg.particles)->capture_default_str();
    s_mc->add_flag("--smooth", mc.cfg.smooth, "refit a smoothing proposal each round");
    s_mc->add_flag("--no-resample", mc.no_resample);
    mc.mech.add(s_mc);
    add_train_flags(s_mc, mc.cfg.train, true);
    seed_flag(s_mc, mc.seed);

    for (auto* s : app.get_subcommands({})) s->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*s_gen) return cmd_gen_synthetic(gen);
        if (*s_cen) return cmd_censor(cen);
        if (*s_tm) return cmd_train_model(tm);
        if (*s_tp) return cmd_train_proposal(tp);
        if (*s_im) return cmd_impute(im);
        if (*s_de) return cmd_decode(de);
        if (*s_ot) return cmd_otd(ot);
        if (*s_ep) return cmd_evaluate_proposal(ep);
        if (*s_ed) return cmd_evaluate_decode(ed);
        if (*s_sw) return cmd_sweep_rho(sw);
        if (*s_mc) return cmd_mcem(mc);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
