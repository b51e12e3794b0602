#include "covpred/covnet.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace covpred::covnet {

using neural::Mat;
using neural::ParamBinder;
using neural::ParamStore;
using neural::Tape;
using neural::Var;

namespace {

constexpr double kLogTwoPi = 1.8378770664093453;
constexpr double kLogSigmaLo = -5.0;
constexpr double kLogSigmaHi = 2.0;

void validate(const CovNetConfig& cfg) {
    if (cfg.hidden <= 0 || cfg.latent <= 0 || cfg.attn <= 0 || cfg.mlp_hidden <= 0)
        throw std::invalid_argument("covnet: sizes must be positive");
    if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0))
        throw std::invalid_argument("covnet: dropout must be in [0, 1)");
}

neural::LstmCellSpec hist_spec(const CovNetConfig& cfg) { return {2, cfg.hidden}; }
neural::LstmCellSpec nb_spec(const CovNetConfig& cfg) { return {cfg.attn, cfg.hidden}; }
neural::AttentionSpec attn_spec(const CovNetConfig& cfg) {
    return {cfg.hidden, cfg.attn, cfg.attn, cfg.attn};
}
neural::MlpSpec latent_spec(const CovNetConfig& cfg, int input_size) {
    return {input_size, cfg.mlp_hidden, cfg.latent, cfg.dropout};
}
neural::MlpSpec head_spec(const CovNetConfig& cfg, int output_size) {
    return {cfg.hidden, cfg.mlp_hidden, output_size, cfg.dropout};
}
neural::GruCellSpec dec_spec(const CovNetConfig& cfg) {
    return {2 + cfg.latent, cfg.hidden};
}

LatentGaussian latent_from(Tape& t, ParamBinder& p, const CovNetConfig& cfg,
                           const std::string& mu_name, const std::string& sig_name,
                           Var input, int input_size, bool train, Rng& rng) {
    const auto spec = latent_spec(cfg, input_size);
    LatentGaussian g;
    g.mu = neural::mlp_forward(t, p, mu_name, spec, input, train, rng);
    const Var logsig = neural::clamp(
        t, neural::mlp_forward(t, p, sig_name, spec, input, train, rng),
        kLogSigmaLo, kLogSigmaHi);
    g.sigma = neural::exp(t, logsig);
    return g;
}

}  // namespace

void init_cov_model(ParamStore& store, const CovNetConfig& cfg, Rng& rng) {
    validate(cfg);
    neural::init_lstm(store, "cov.hist_pos", hist_spec(cfg), rng);
    neural::init_lstm(store, "cov.hist_vel", hist_spec(cfg), rng);
    neural::init_lstm(store, "cov.hist_acc", hist_spec(cfg), rng);
    neural::init_lstm(store, "cov.fut", hist_spec(cfg), rng);
    neural::init_dense(store, "cov.nb_embed", {3, cfg.attn}, rng);
    neural::init_attention(store, "cov.attn", attn_spec(cfg), rng);
    neural::init_lstm(store, "cov.nb_lstm", nb_spec(cfg), rng);
    neural::init_mlp(store, "cov.prior_mu", latent_spec(cfg, cfg.hidden), rng);
    neural::init_mlp(store, "cov.prior_logsig", latent_spec(cfg, cfg.hidden), rng);
    neural::init_mlp(store, "cov.post_mu", latent_spec(cfg, 2 * cfg.hidden), rng);
    neural::init_mlp(store, "cov.post_logsig", latent_spec(cfg, 2 * cfg.hidden), rng);
    neural::init_mlp(store, "cov.dec_init",
                     {cfg.hidden, cfg.mlp_hidden, cfg.hidden, cfg.dropout}, rng);
    neural::init_gru(store, "cov.dec_gru", dec_spec(cfg), rng);
    neural::init_mlp(store, "cov.sig_head", head_spec(cfg, 2), rng);
    neural::init_mlp(store, "cov.rho_head", head_spec(cfg, 1), rng);
}

WindowInputs make_inputs(const dataset::TrackletWindow& w,
                         const dataset::Kinematics& k,
                         const std::vector<Vec2>& sfm_means) {
    if (sfm_means.size() != static_cast<std::size_t>(dataset::kPredLen))
        throw std::invalid_argument("covnet: mean rollout must cover the horizon");
    WindowInputs in;
    in.last_obs = w.last_obs();
    in.rel_obs.resize(2, dataset::kObsLen);
    in.vel.resize(2, dataset::kObsLen);
    in.acc.resize(2, dataset::kObsLen);
    for (int t = 0; t < dataset::kObsLen; ++t) {
        in.rel_obs.col(t) = w.obs()[t] - in.last_obs;
        in.vel.col(t) = k.vel[t];
        in.acc.col(t) = k.acc[t];
    }
    in.neighbor_feat.reserve(w.neighbors().size());
    for (const auto& nb : w.neighbors()) {
        Mat f = Mat::Zero(3, dataset::kObsLen);
        for (int t = 0; t < dataset::kObsLen; ++t) {
            if (!nb.present[t]) continue;
            f.block<2, 1>(0, t) = nb.pos[t] - w.obs()[t];
            f(2, t) = 1.0;
        }
        in.neighbor_feat.push_back(std::move(f));
    }
    in.rel_fut.resize(2, dataset::kPredLen);
    for (int t = 0; t < dataset::kPredLen; ++t)
        in.rel_fut.col(t) = w.fut()[t] - in.last_obs;
    in.sfm_rel.reserve(sfm_means.size());
    for (const auto& m : sfm_means) in.sfm_rel.push_back(m - in.last_obs);
    in.sfm_abs = sfm_means;
    return in;
}

EncodedScene encode_scene(Tape& t, ParamBinder& p, const CovNetConfig& cfg,
                          const WindowInputs& in, bool with_future) {
    validate(cfg);
    const auto hspec = hist_spec(cfg);
    auto sp = neural::lstm_initial(t, hspec);
    auto sv = neural::lstm_initial(t, hspec);
    auto sa = neural::lstm_initial(t, hspec);
    std::vector<Var> pos_h;
    pos_h.reserve(dataset::kObsLen);
    for (int i = 0; i < dataset::kObsLen; ++i) {
        sp = neural::lstm_step(t, p, "cov.hist_pos", hspec,
                               t.constant(in.rel_obs.col(i)), sp);
        pos_h.push_back(sp.h);
        sv = neural::lstm_step(t, p, "cov.hist_vel", hspec,
                               t.constant(in.vel.col(i)), sv);
        sa = neural::lstm_step(t, p, "cov.hist_acc", hspec,
                               t.constant(in.acc.col(i)), sa);
    }
    EncodedScene enc;
    enc.e_hist = neural::add(t, neural::add(t, sp.h, sv.h), sa.h);

    // One attention read per observed step, queried by the position LSTM
    // state; an absent neighbor still occupies a slot but its feature
    // column collapses to the flag.
    const auto nspec = nb_spec(cfg);
    auto sn = neural::lstm_initial(t, nspec);
    for (int i = 0; i < dataset::kObsLen; ++i) {
        std::vector<Var> tokens;
        tokens.reserve(in.neighbor_feat.size());
        for (const auto& f : in.neighbor_feat)
            tokens.push_back(
                neural::dense(t, p, "cov.nb_embed", t.constant(f.col(i))));
        const std::vector<bool> mask(tokens.size(), true);
        const auto att = neural::additive_attention(t, p, "cov.attn", attn_spec(cfg),
                                                    pos_h[i], tokens, tokens, mask);
        sn = neural::lstm_step(t, p, "cov.nb_lstm", nspec, att.context, sn);
    }
    enc.e_neigh = sn.h;
    enc.e_scene = neural::add(t, enc.e_hist, enc.e_neigh);

    if (with_future) {
        auto sf = neural::lstm_initial(t, hspec);
        for (int i = 0; i < dataset::kPredLen; ++i)
            sf = neural::lstm_step(t, p, "cov.fut", hspec,
                                   t.constant(in.rel_fut.col(i)), sf);
        enc.e_fut = sf.h;
    }
    return enc;
}

LatentGaussian prior(Tape& t, ParamBinder& p, const CovNetConfig& cfg,
                     Var e_scene, bool train, Rng& rng) {
    return latent_from(t, p, cfg, "cov.prior_mu", "cov.prior_logsig", e_scene,
                       cfg.hidden, train, rng);
}

LatentGaussian posterior(Tape& t, ParamBinder& p, const CovNetConfig& cfg,
                         Var e_scene, Var e_fut, bool train, Rng& rng) {
    const Var joint = neural::vstack(t, {e_scene, e_fut});
    return latent_from(t, p, cfg, "cov.post_mu", "cov.post_logsig", joint,
                       2 * cfg.hidden, train, rng);
}

gauss::DiagGaussianN latent_values(const Tape& t, const LatentGaussian& q) {
    return {t.value(q.mu).col(0), t.value(q.sigma).col(0)};
}

Var reparameterize(Tape& t, const LatentGaussian& q, const Eigen::VectorXd& eps) {
    if (eps.size() != t.value(q.mu).rows())
        throw std::invalid_argument("covnet: eps size must match the latent");
    return neural::add(t, q.mu, neural::cmul(t, q.sigma, t.constant(eps)));
}

Var kl_standard(Tape& t, const LatentGaussian& q) {
    const Var s2 = neural::square(t, q.sigma);
    const Var terms = neural::sub(t, neural::add(t, s2, neural::square(t, q.mu)),
                                  neural::affine(t, neural::log(t, s2), 1.0, 1.0));
    return neural::affine(t, neural::sum(t, terms), 0.5, 0.0);
}

Var kl_between(Tape& t, const LatentGaussian& q, const LatentGaussian& p) {
    const auto n = static_cast<double>(t.value(q.mu).rows());
    const Var dm = neural::sub(t, q.mu, p.mu);
    const Var ratio =
        neural::cdiv(t, neural::add(t, neural::square(t, q.sigma), neural::square(t, dm)),
                     neural::square(t, p.sigma));
    const Var logs = neural::sub(t, neural::log(t, neural::square(t, p.sigma)),
                                 neural::log(t, neural::square(t, q.sigma)));
    return neural::affine(t, neural::sum(t, neural::add(t, ratio, logs)), 0.5,
                          -0.5 * n);
}

std::vector<DecodedStep> decode(Tape& t, ParamBinder& p, const CovNetConfig& cfg,
                                Var z, Var e_scene,
                                const std::vector<Vec2>& sfm_rel, bool train,
                                Rng& rng) {
    if (sfm_rel.empty())
        throw std::invalid_argument("covnet: decode needs a non-empty horizon");
    const neural::MlpSpec init_spec{cfg.hidden, cfg.mlp_hidden, cfg.hidden,
                                    cfg.dropout};
    Var h = neural::mlp_forward(t, p, "cov.dec_init", init_spec, e_scene, train, rng);
    const auto gspec = dec_spec(cfg);
    const auto sig_spec = head_spec(cfg, 2);
    const auto rho_spec = head_spec(cfg, 1);
    std::vector<DecodedStep> out;
    out.reserve(sfm_rel.size());
    for (std::size_t i = 0; i < sfm_rel.size(); ++i) {
        const Vec2 prev = i == 0 ? Vec2(0.0, 0.0) : sfm_rel[i - 1];
        const Var x = neural::vstack(t, {t.constant(prev), z});
        h = neural::gru_step(t, p, "cov.dec_gru", gspec, x, h);
        DecodedStep step;
        step.sigma = neural::affine(
            t,
            neural::softplus(t, neural::mlp_forward(t, p, "cov.sig_head", sig_spec,
                                                    h, train, rng)),
            1.0, kSigmaFloor);
        step.rho = neural::affine(
            t,
            neural::tanh(t, neural::mlp_forward(t, p, "cov.rho_head", rho_spec, h,
                                                train, rng)),
            kRhoMax, 0.0);
        out.push_back(step);
    }
    return out;
}

Var nll_step(Tape& t, const DecodedStep& d, const Vec2& residual) {
    const Var u = neural::cdiv(t, t.constant(residual), d.sigma);
    const Var s = neural::sum(t, neural::square(t, u));
    const Var prod = neural::cmul(t, neural::rows(t, u, 0, 1), neural::rows(t, u, 1, 1));
    const Var one_minus = neural::affine(t, neural::square(t, d.rho), -1.0, 1.0);
    const Var quad = neural::cdiv(
        t, neural::sub(t, s, neural::affine(t, neural::cmul(t, d.rho, prod), 2.0, 0.0)),
        one_minus);
    const Var logdet = neural::add(t, neural::sum(t, neural::log(t, d.sigma)),
                                   neural::affine(t, neural::log(t, one_minus), 0.5, 0.0));
    return neural::affine(t, neural::add(t, logdet, neural::affine(t, quad, 0.5, 0.0)),
                          1.0, kLogTwoPi);
}

PredictedDistribution predict_distribution(const ParamStore& store,
                                           const CovNetConfig& cfg,
                                           const dataset::TrackletWindow& w,
                                           const std::vector<Vec2>& sfm_means,
                                           LatentMode mode, Rng& rng) {
    const auto kin = dataset::derive_kinematics(w);
    const auto in = make_inputs(w, kin, sfm_means);
    Tape t;
    ParamBinder bind(t, store);
    Rng unused(0);
    const auto enc = encode_scene(t, bind, cfg, in, false);
    const auto pz = prior(t, bind, cfg, enc.e_scene, false, unused);
    Eigen::VectorXd eps = Eigen::VectorXd::Zero(t.value(pz.mu).rows());
    if (mode == LatentMode::kPriorSample)
        for (Eigen::Index i = 0; i < eps.size(); ++i) eps(i) = rng.normal();
    const Var z = reparameterize(t, pz, eps);
    const auto steps = decode(t, bind, cfg, z, enc.e_scene, in.sfm_rel, false, unused);

    PredictedDistribution out;
    out.reserve(steps.size());
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const Mat& s = t.value(steps[i].sigma);
        out.emplace_back(in.sfm_abs[i], s(0, 0), s(1, 0),
                         t.value(steps[i].rho)(0, 0));
    }
    return out;
}

}  // namespace covpred::covnet
