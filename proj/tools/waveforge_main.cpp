// waveforge command-line tool: synthetic epoch datasets, WGAN-GP training,
// sample generation, mixture-model quality reports, and the upsampling-scheme
// comparison experiment.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "waveforge/checkpoint.hpp"
#include "waveforge/dataset.hpp"
#include "waveforge/evaluation.hpp"
#include "waveforge/experiments.hpp"
#include "waveforge/report.hpp"
#include "waveforge/training.hpp"

namespace wf = waveforge;
namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

std::string fmt(double v, int precision = 6) {
    std::ostringstream os;
    os.precision(precision);
    os << v;
    return os.str();
}

void require_parent_writable(const fs::path& path) {
    const fs::path dir = path.parent_path().empty() ? fs::path(".") : path.parent_path();
    if (!fs::exists(dir)) {
        throw wf::IoError("output directory '" + dir.string() + "' does not exist");
    }
}

struct GenDataArgs {
    std::string kind = "sinusoid";
    std::int64_t n = 5000;
    double freq = 5.0;
    double amp = 1.0;
    double noise_var = 1.0;
    std::string phase = "random";
    double fixed_phase = 0.0;
    std::int64_t n_per_class = 500;
    std::int64_t channels = 1;
    std::uint64_t seed = 0;
    std::string out;
    std::string csv;
};

int cmd_gen_data(const GenDataArgs& args) {
    require_parent_writable(args.out);
    wf::data::EpochDataset ds;
    if (args.kind == "sinusoid") {
        const auto mode = args.phase == "fixed" ? wf::data::PhaseMode::Fixed
                                                : wf::data::PhaseMode::Random;
        ds = wf::data::gen_sinusoid_toy(args.n, args.freq, args.amp, args.noise_var, args.seed,
                                        mode, args.fixed_phase);
    } else {
        ds = wf::data::gen_erp_surrogate(args.n_per_class, args.channels, args.seed);
    }
    wf::data::save_dataset(args.out, ds);
    if (!args.csv.empty()) {
        wf::data::export_csv(args.csv, ds);
    }
    std::cout << "wrote " << args.out << ": N=" << ds.n() << " C=" << ds.channels()
              << " T=" << ds.length();
    if (ds.labels.has_value()) {
        std::int64_t target = 0;
        for (const auto l : *ds.labels) {
            target += l;
        }
        std::cout << " labels=" << target << " target / " << ds.n() - target << " non-target";
    } else {
        std::cout << " labels=none";
    }
    std::cout << "\n";
    return 0;
}

struct TrainArgs {
    std::string data;
    std::string out;
    std::string log;
    std::string scheme = "bc-dcbl";
    double width = 1.0;
    std::int64_t steps = 1000;
    std::uint64_t seed = 0;
    std::int64_t batch = 32;
    double lr = 1e-4;
    double lambda = 10.0;
    int ratio_d = 1;
    int ratio_g = 5;
    std::int64_t eval_every = 50;
    std::int64_t latent_dim = 120;
    double beta1 = 0.0;
    double beta2 = 0.9;
    bool cc = false;
};

void write_log(const fs::path& path, const std::vector<wf::training::LogRow>& rows) {
    std::ofstream os(path);
    if (!os) {
        throw wf::IoError("cannot open log file '" + path.string() + "'");
    }
    os << wf::training::log_csv_header() << "\n";
    for (const auto& row : rows) {
        os << wf::training::to_csv(row) << "\n";
    }
}

void save_snapshot_checkpoint(const fs::path& path, const wf::training::Snapshot& snap,
                              const std::vector<wf::NamedParam>& like) {
    std::vector<wf::NamedParam> params;
    params.reserve(snap.values.size());
    for (std::size_t i = 0; i < snap.values.size(); ++i) {
        params.push_back({snap.values[i].first,
                          wf::Tensor::from_data(like[i].tensor.shape(), snap.values[i].second),
                          like[i].trainable});
    }
    wf::ckpt::save_checkpoint(path, params);
}

fs::path with_suffix(const fs::path& p, const std::string& tag) {
    fs::path out = p;
    out.replace_extension();
    out += tag;
    out += p.extension();
    return out;
}

int cmd_train(const TrainArgs& args) {
    require_parent_writable(args.out);
    const auto ds = wf::data::load_dataset(args.data);
    const std::int64_t channels = ds.channels();

    wf::training::TrainConfig cfg;
    cfg.lambda_gp = args.lambda;
    cfg.ratio_d_to_g = {args.ratio_d, args.ratio_g};
    cfg.learning_rate = args.lr;
    cfg.adam_betas = {args.beta1, args.beta2};
    cfg.batch_size = args.batch;
    cfg.max_steps = args.steps;
    cfg.seed = args.seed;
    cfg.latent_dim = args.latent_dim;
    cfg.class_conditioned = args.cc;
    cfg.eval_every = args.eval_every;
    wf::training::validate(cfg);

    wf::models::ModelSpec gen_spec;
    gen_spec.width_scale = args.width;
    gen_spec.latent_dim = args.latent_dim;
    gen_spec.channels = channels;
    gen_spec.scheme = wf::models::scheme_from_string(args.scheme);

    const fs::path log_path = args.log.empty() ? fs::path(args.out + ".log.csv")
                                               : fs::path(args.log);
    wf::Rng build_rng(args.seed);

    if (args.cc) {
        gen_spec.variant = wf::models::Variant::CCGen;
        auto gen = wf::models::build_generator(gen_spec, build_rng);
        auto cc = wf::models::build_cc_model(gen_spec, build_rng);
        const auto state = wf::training::train(gen, cc, ds, cfg);

        auto params = gen.params();
        const auto critic = cc.params();
        params.insert(params.end(), critic.begin(), critic.end());
        wf::ckpt::save_checkpoint(args.out, params);
        std::ofstream(args.out + ".spec") << wf::models::serialize(gen_spec);
        write_log(log_path, state.logs);
        if (!state.best_snapshot.empty()) {
            const fs::path best = with_suffix(args.out, ".best");
            save_snapshot_checkpoint(best, state.best_snapshot, params);
            std::ofstream(best.string() + ".spec") << wf::models::serialize(gen_spec);
            std::cout << "best auc " << fmt(state.best_auc.value_or(0.0), 4) << " -> " << best
                      << "\n";
        }
        std::cout << "trained " << state.step << " rounds; checkpoint " << args.out << ", log "
                  << log_path << "\n";
        return 0;
    }

    gen_spec.variant = channels == 1 ? wf::models::Variant::Gen1ch : wf::models::Variant::Gen64ch;
    wf::models::ModelSpec disc_spec = gen_spec;
    disc_spec.variant = channels == 1 ? wf::models::Variant::Disc1ch
                                      : wf::models::Variant::Disc64ch;
    auto gen = wf::models::build_generator(gen_spec, build_rng);
    auto disc = wf::models::build_discriminator(disc_spec, build_rng);
    const auto state = wf::training::train(gen, disc, ds, cfg);

    auto params = gen.params();
    const auto dparams = disc.params();
    params.insert(params.end(), dparams.begin(), dparams.end());
    wf::ckpt::save_checkpoint(args.out, params);
    std::ofstream(args.out + ".spec") << wf::models::serialize(gen_spec);
    write_log(log_path, state.logs);
    if (!state.logs.empty()) {
        const auto& last = state.logs.back();
        std::cout << "final: loss_d=" << fmt(last.loss_d, 4) << " loss_g=" << fmt(last.loss_g, 4)
                  << " wasserstein=" << fmt(last.wasserstein, 4) << " gp=" << fmt(last.gp, 4)
                  << "\n";
    }
    std::cout << "trained " << state.step << " rounds; checkpoint " << args.out << ", log "
              << log_path << "\n";
    return 0;
}

wf::models::Generator load_generator(const std::string& checkpoint, const std::string& spec_path) {
    const fs::path spec_file = spec_path.empty() ? fs::path(checkpoint + ".spec")
                                                 : fs::path(spec_path);
    std::ifstream is(spec_file);
    if (!is) {
        throw wf::IoError("cannot open model spec '" + spec_file.string() + "'");
    }
    std::stringstream buffer;
    buffer << is.rdbuf();
    const auto spec = wf::models::parse_model_spec(buffer.str());

    wf::Rng rng(0); // initial values are replaced by the checkpoint
    auto gen = wf::models::build_generator(spec, rng);
    auto params = gen.params();

    const auto loaded = wf::ckpt::load_checkpoint(checkpoint);
    std::vector<std::pair<std::string, wf::Tensor>> gen_only;
    for (const auto& entry : loaded) {
        if (entry.first.rfind("g.", 0) == 0) {
            gen_only.push_back(entry);
        }
    }
    if (gen_only.empty()) {
        throw wf::FormatError("checkpoint '" + checkpoint + "' holds no generator parameters");
    }
    wf::ckpt::apply_checkpoint(gen_only, params);
    return gen;
}

struct GenerateArgs {
    std::string checkpoint;
    std::string spec;
    std::int64_t n = 1000;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_generate(const GenerateArgs& args) {
    require_parent_writable(args.out);
    const auto gen = load_generator(args.checkpoint, args.spec);
    const auto ds = wf::training::generate_samples(gen, args.n, args.seed, gen.spec().channels);
    wf::data::save_dataset(args.out, ds);
    std::cout << "wrote " << args.out << ": N=" << ds.n() << " C=" << ds.channels()
              << " T=" << ds.length() << "\n";
    return 0;
}

struct EvaluateArgs {
    std::string real;
    std::string gen;
    std::string gmm_k = "auto";
    int k_min = 1;
    int k_max = 6;
    std::string cov = "diag";
    int band = 5;
    std::int64_t gmm_draws = 2048;
    std::uint64_t seed = 0;
    std::string out_prefix;
    bool plot = true;
};

std::vector<std::vector<double>> channel_signals(const wf::data::EpochDataset& ds,
                                                 std::int64_t channel) {
    std::vector<std::vector<double>> out;
    out.reserve(static_cast<std::size_t>(ds.n()));
    const auto d = ds.samples.data();
    const std::int64_t ct = ds.channels() * ds.length();
    for (std::int64_t i = 0; i < ds.n(); ++i) {
        const double* base = d.data() + i * ct + channel * ds.length();
        out.emplace_back(base, base + ds.length());
    }
    return out;
}

int cmd_evaluate(const EvaluateArgs& args) {
    require_parent_writable(args.out_prefix + ".report.csv");
    const auto real = wf::data::load_dataset(args.real);
    const auto gen = wf::data::load_dataset(args.gen);
    if (real.channels() != gen.channels() || real.length() != gen.length()) {
        throw wf::ValueError("evaluate: real " + wf::shape_str(real.samples.shape()) +
                             " and generated " + wf::shape_str(gen.samples.shape()) +
                             " sets have different epoch geometry");
    }
    const auto cov = args.cov == "full" ? wf::eval::CovType::Full : wf::eval::CovType::Diagonal;

    wf::eval::QualityReport report;
    double ll_real = 0.0;
    double ll_gen = 0.0;
    double ll_gmm = 0.0;
    double art_real = 0.0;
    double art_gen = 0.0;
    const std::int64_t channels = real.channels();
    for (std::int64_t c = 0; c < channels; ++c) {
        const auto real_sig = channel_signals(real, c);
        const auto gen_sig = channel_signals(gen, c);
        wf::eval::GmmFit fit;
        if (args.gmm_k == "auto") {
            auto sel = wf::eval::gmm_select_k(real_sig, args.k_min, args.k_max, args.seed, cov);
            report.k_per_channel.push_back(sel.k);
            fit = std::move(sel.fit);
        } else {
            const int k = std::stoi(args.gmm_k);
            fit = wf::eval::gmm_fit_em(real_sig, k, args.seed, cov);
            report.k_per_channel.push_back(k);
        }
        const auto draws =
            wf::eval::gmm_sample(fit.model, args.gmm_draws, args.seed + 0x5a5a + c);
        ll_real += wf::eval::gmm_log_likelihood(fit.model, real_sig);
        ll_gen += wf::eval::gmm_log_likelihood(fit.model, gen_sig);
        ll_gmm += wf::eval::gmm_log_likelihood(fit.model, draws);
        art_real += wf::eval::spectral_artifact_ratio(real_sig, {args.band});
        art_gen += wf::eval::spectral_artifact_ratio(gen_sig, {args.band});
    }
    const double inv_c = 1.0 / static_cast<double>(channels);
    report.ll_real = ll_real * inv_c;
    report.ll_gen = ll_gen * inv_c;
    report.ll_gmm = ll_gmm * inv_c;
    report.dist_real_gmm = std::abs(report.ll_real - report.ll_gmm);
    report.dist_gen_gmm = std::abs(report.ll_gen - report.ll_gmm);
    report.real_gen_gap = std::abs(report.ll_real - report.ll_gen);
    report.artifact_ratio_real = art_real * inv_c;
    report.artifact_ratio_gen = art_gen * inv_c;

    // Channel-averaged mean waveforms.
    auto grand_average = [&](const wf::data::EpochDataset& ds) {
        std::vector<double> avg(static_cast<std::size_t>(ds.length()), 0.0);
        for (std::int64_t c = 0; c < ds.channels(); ++c) {
            const auto per = wf::eval::averaged_waveform(channel_signals(ds, c));
            for (std::size_t t = 0; t < avg.size(); ++t) {
                avg[t] += per[t];
            }
        }
        for (auto& v : avg) {
            v /= static_cast<double>(ds.channels());
        }
        return avg;
    };
    report.avg_real = grand_average(real);
    report.avg_gen = grand_average(gen);

    std::ofstream(args.out_prefix + ".report.csv") << report.to_csv();
    std::ofstream(args.out_prefix + ".summary.txt") << report.to_text();
    wf::report::write_series_csv(args.out_prefix + ".avg_real.csv", "index", "value",
                                 report.avg_real);
    wf::report::write_series_csv(args.out_prefix + ".avg_gen.csv", "index", "value",
                                 report.avg_gen);
    wf::report::write_series_csv(args.out_prefix + ".spectrum_real.csv", "bin", "energy",
                                 wf::eval::one_sided_energy(report.avg_real));
    wf::report::write_series_csv(args.out_prefix + ".spectrum_gen.csv", "bin", "energy",
                                 wf::eval::one_sided_energy(report.avg_gen));
    if (args.plot) {
        wf::report::write_line_svg(args.out_prefix + ".waveforms.svg", "averaged waveforms",
                                   {{"real", report.avg_real}, {"generated", report.avg_gen}});
    }
    std::cout << report.to_text();
    return 0;
}

struct CompareArgs {
    std::string data;
    std::string seeds = "1,2,3,4,5";
    double width = 0.125;
    std::int64_t steps = 800;
    std::int64_t batch = 32;
    double lr = 1e-4;
    double lambda = 10.0;
    int ratio_d = 1;
    int ratio_g = 5;
    std::int64_t eval_every = 100;
    std::int64_t latent_dim = 120;
    int band = 5;
    std::int64_t n_eval = 512;
    std::string out_dir;
    bool plot = true;
};

int cmd_compare(const CompareArgs& args) {
    const auto ds = wf::data::load_dataset(args.data);
    std::vector<std::uint64_t> seeds;
    {
        std::stringstream ss(args.seeds);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            seeds.push_back(std::stoull(tok));
        }
    }
    if (seeds.empty()) {
        throw wf::ValueError("compare-upsampling: empty seed list");
    }
    fs::create_directories(args.out_dir);

    wf::training::TrainConfig base;
    base.lambda_gp = args.lambda;
    base.ratio_d_to_g = {args.ratio_d, args.ratio_g};
    base.learning_rate = args.lr;
    base.batch_size = args.batch;
    base.max_steps = args.steps;
    base.latent_dim = args.latent_dim;
    base.eval_every = args.eval_every;
    wf::training::validate(base);

    const auto& schemes = wf::models::kAllSchemes;
    const int threads = wf::experiments::worker_threads(schemes.size() * seeds.size());
    const auto results = wf::experiments::compare_upsampling(
        ds, schemes, seeds, base, args.width, args.band, args.n_eval, threads);

    // Per-run table.
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : results) {
        rows.push_back({wf::models::to_string(r.scheme), std::to_string(r.seed),
                        std::to_string(r.dominant_bin), fmt(r.amplitude),
                        fmt(r.artifact_ratio)});
    }
    wf::report::write_csv(fs::path(args.out_dir) / "comparison.csv",
                          {"scheme", "seed", "dominant_bin", "amplitude", "artifact_ratio"},
                          rows);

    // Per-scheme summary, one row per scheme.
    struct Summary {
        std::string scheme;
        double median_artifact;
        double mean_amplitude;
        int dominant_hits;
    };
    std::vector<Summary> summary;
    for (const auto scheme : schemes) {
        std::vector<double> art;
        double amp = 0.0;
        int hits = 0;
        int count = 0;
        for (const auto& r : results) {
            if (r.scheme != scheme) {
                continue;
            }
            art.push_back(r.artifact_ratio);
            amp += r.amplitude;
            hits += r.dominant_bin == args.band ? 1 : 0;
            ++count;
        }
        std::sort(art.begin(), art.end());
        const double median = art.size() % 2 == 1
                                  ? art[art.size() / 2]
                                  : 0.5 * (art[art.size() / 2 - 1] + art[art.size() / 2]);
        summary.push_back({wf::models::to_string(scheme), median,
                           amp / static_cast<double>(count), hits});
    }
    std::vector<std::vector<std::string>> srows;
    for (const auto& s : summary) {
        srows.push_back({s.scheme, fmt(s.median_artifact), fmt(s.mean_amplitude),
                         std::to_string(s.dominant_hits)});
    }
    wf::report::write_csv(fs::path(args.out_dir) / "summary.csv",
                          {"scheme", "median_artifact_ratio", "mean_amplitude", "dominant_hits"},
                          srows);

    // Ranked view: lower artifact ratio first.
    std::vector<Summary> ranked = summary;
    std::sort(ranked.begin(), ranked.end(), [](const Summary& a, const Summary& b) {
        return a.median_artifact < b.median_artifact;
    });
    std::cout << "scheme       artifact(median)  amplitude(mean)  dominant-bin hits\n";
    for (const auto& s : ranked) {
        std::cout << s.scheme;
        for (std::size_t pad = s.scheme.size(); pad < 13; ++pad) {
            std::cout << ' ';
        }
        std::cout << fmt(s.median_artifact, 4) << "            " << fmt(s.mean_amplitude, 4)
                  << "           " << s.dominant_hits << "/" << seeds.size() << "\n";
    }

    if (args.plot) {
        std::vector<wf::report::Series> series;
        std::vector<std::vector<double>> real_sig;
        for (std::int64_t i = 0; i < ds.n(); ++i) {
            real_sig.push_back(ds.epoch(i));
        }
        series.push_back({"real", wf::eval::averaged_waveform(real_sig)});
        for (const auto scheme : schemes) {
            for (const auto& r : results) {
                if (r.scheme == scheme && r.seed == seeds.front()) {
                    series.push_back({wf::models::to_string(scheme), r.avg_waveform});
                    break;
                }
            }
        }
        wf::report::write_line_svg(fs::path(args.out_dir) / "waveforms.svg",
                                   "averaged real and generated waveforms", series);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"waveforge: WGAN-GP synthesis and evaluation of time-series signal epochs"};
    app.require_subcommand(1);

    GenDataArgs gd;
    auto* gen_data = app.add_subcommand("gen-data", "generate a synthetic epoch dataset");
    gen_data->set_config("--config");
    gen_data->add_option("--kind", gd.kind)->check(CLI::IsMember({"sinusoid", "erp"}));
    gen_data->add_option("-n,--n", gd.n, "epochs (sinusoid kind)");
    gen_data->add_option("--freq", gd.freq, "sinusoid frequency in Hz");
    gen_data->add_option("--amp", gd.amp, "sinusoid amplitude");
    gen_data->add_option("--noise-var", gd.noise_var, "additive noise variance");
    gen_data->add_option("--phase", gd.phase)->check(CLI::IsMember({"random", "fixed"}));
    gen_data->add_option("--fixed-phase", gd.fixed_phase, "phase used in fixed mode");
    gen_data->add_option("--n-per-class", gd.n_per_class, "epochs per class (erp kind)");
    gen_data->add_option("--channels", gd.channels)->check(CLI::IsMember({1, 64}));
    gen_data->add_option("--seed", gd.seed);
    gen_data->add_option("-o,--out", gd.out, "output .wfds path")->required();
    gen_data->add_option("--csv", gd.csv, "also export epochs as CSV");

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "train a WGAN-GP on an epoch dataset");
    train_cmd->set_config("--config");
    train_cmd->add_option("--data", tr.data)->required()->check(CLI::ExistingFile);
    train_cmd->add_option("-o,--out", tr.out, "checkpoint output path")->required();
    train_cmd->add_option("--log", tr.log, "training log CSV (default <out>.log.csv)");
    train_cmd->add_option("--scheme", tr.scheme)
        ->check(CLI::IsMember({"dc-dc", "bc-bc", "nn-nn", "bc-dcbl", "dcbl-bc", "dcbl-dcbl"}));
    train_cmd->add_option("--width", tr.width, "width scale in (0,1]");
    train_cmd->add_option("--steps", tr.steps, "training rounds");
    train_cmd->add_option("--seed", tr.seed);
    train_cmd->add_option("--batch", tr.batch);
    train_cmd->add_option("--lr", tr.lr);
    train_cmd->add_option("--lambda", tr.lambda, "gradient penalty weight");
    train_cmd->add_option("--ratio-d", tr.ratio_d, "critic updates per round");
    train_cmd->add_option("--ratio-g", tr.ratio_g, "generator updates per round");
    train_cmd->add_option("--eval-every", tr.eval_every);
    train_cmd->add_option("--latent-dim", tr.latent_dim);
    train_cmd->add_option("--beta1", tr.beta1);
    train_cmd->add_option("--beta2", tr.beta2);
    train_cmd->add_flag("--cc", tr.cc, "class-conditioned training (labeled data)");

    GenerateArgs ga;
    auto* generate = app.add_subcommand("generate", "sample epochs from a trained generator");
    generate->set_config("--config");
    generate->add_option("-c,--checkpoint", ga.checkpoint)->required()->check(CLI::ExistingFile);
    generate->add_option("--spec", ga.spec, "model spec file (default <checkpoint>.spec)");
    generate->add_option("-n,--n", ga.n);
    generate->add_option("--seed", ga.seed);
    generate->add_option("-o,--out", ga.out)->required();

    EvaluateArgs ev;
    auto* evaluate = app.add_subcommand("evaluate", "mixture-model quality report");
    evaluate->set_config("--config");
    evaluate->add_option("--real", ev.real)->required()->check(CLI::ExistingFile);
    evaluate->add_option("--gen", ev.gen)->required()->check(CLI::ExistingFile);
    evaluate->add_option("--gmm-k", ev.gmm_k, "component count or 'auto' (BIC)");
    evaluate->add_option("--k-min", ev.k_min);
    evaluate->add_option("--k-max", ev.k_max);
    evaluate->add_option("--gmm-cov", ev.cov)->check(CLI::IsMember({"diag", "full"}));
    evaluate->add_option("--band", ev.band, "signal bin for the artifact ratio");
    evaluate->add_option("--gmm-samples", ev.gmm_draws);
    evaluate->add_option("--seed", ev.seed);
    evaluate->add_option("-o,--out", ev.out_prefix, "output file prefix")->required();
    evaluate->add_flag("!--no-plot", ev.plot, "skip SVG output");

    CompareArgs cu;
    auto* compare = app.add_subcommand("compare-upsampling",
                                       "train all six upsampling schemes under one budget");
    compare->set_config("--config");
    compare->add_option("--data", cu.data)->required()->check(CLI::ExistingFile);
    compare->add_option("--seeds", cu.seeds, "comma-separated seed list");
    compare->add_option("--width", cu.width);
    compare->add_option("--steps", cu.steps);
    compare->add_option("--batch", cu.batch);
    compare->add_option("--lr", cu.lr);
    compare->add_option("--lambda", cu.lambda);
    compare->add_option("--ratio-d", cu.ratio_d);
    compare->add_option("--ratio-g", cu.ratio_g);
    compare->add_option("--eval-every", cu.eval_every);
    compare->add_option("--latent-dim", cu.latent_dim);
    compare->add_option("--band", cu.band);
    compare->add_option("--n-eval", cu.n_eval, "generated samples per run");
    compare->add_option("-o,--out", cu.out_dir, "output directory")->required();
    compare->add_flag("!--no-plot", cu.plot, "skip SVG output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (gen_data->parsed()) {
            return cmd_gen_data(gd);
        }
        if (train_cmd->parsed()) {
            return cmd_train(tr);
        }
        if (generate->parsed()) {
            return cmd_generate(ga);
        }
        if (evaluate->parsed()) {
            return cmd_evaluate(ev);
        }
        if (compare->parsed()) {
            return cmd_compare(cu);
        }
    } catch (const wf::NumericError& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const wf::IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const wf::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
