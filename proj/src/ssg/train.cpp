#include "ssg/train.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <utility>

#include "ssg/kernels.hpp"
#include "ssg/ops.hpp"

namespace ssg {

namespace {

// Derived-stream ids under the master seed. Per-level substreams let a
// resumed run re-derive any scale's draws from scratch, which is what makes
// resume bit-identical to an uninterrupted run.
constexpr uint64_t kStreamInit = 1;   // parameter initialization
constexpr uint64_t kStreamBase = 2;   // the fixed reconstruction noise
constexpr uint64_t kStreamNoise = 3;  // per-draw noise seeds
constexpr uint64_t kStreamEps = 4;    // gradient-penalty blend factors

void check_finite(double d_loss, double g_loss, double rec_loss, int level, int iter) {
  if (std::isfinite(d_loss) && std::isfinite(g_loss) && std::isfinite(rec_loss)) return;
  char msg[160];
  std::snprintf(msg, sizeof msg,
                "non-finite loss at level=%d iter=%d (d_loss=%g g_loss=%g rec_loss=%g)", level,
                iter, d_loss, g_loss, rec_loss);
  fail(ErrorCode::training_diverged, msg);
}

}  // namespace

void TrainConfig::validate() const {
  SSG_CHECK(alpha > 0, config_error, "alpha must be positive");
  SSG_CHECK(gp_weight > 0, config_error, "gp_weight must be positive");
  SSG_CHECK(iters_per_scale >= 0, config_error, "iters_per_scale must be >= 0");
  SSG_CHECK(d_steps >= 1, config_error, "d_steps must be >= 1");
  SSG_CHECK(g_steps >= 1, config_error, "g_steps must be >= 1");
  SSG_CHECK(lr > 0, config_error, "lr must be positive");
  SSG_CHECK(adam_beta1 >= 0 && adam_beta1 < 1, config_error, "adam_beta1 must be in [0,1)");
  SSG_CHECK(adam_beta2 >= 0 && adam_beta2 < 1, config_error, "adam_beta2 must be in [0,1)");
  SSG_CHECK(sigma_hat > 0, config_error, "sigma_hat must be positive");
  SSG_CHECK(channels >= 1, config_error, "channels must be >= 1");
  SSG_CHECK(hidden >= 1, config_error, "hidden must be >= 1");
  SSG_CHECK(critic_width >= 1, config_error, "critic_width must be >= 1");
  SSG_CHECK(pool_bins >= 1, config_error, "pool_bins must be >= 1");
}

void ModelStack::validate() const {
  const size_t n = generators.size();
  SSG_CHECK(n >= 1, invalid_state, "stack has no trained levels");
  SSG_CHECK(decoders.size() == n && sigmas.size() == n && level_dims.size() == n, invalid_state,
            "stack level lists disagree in length");
  SSG_CHECK(sigmas[0] == 1.0, invalid_state, "base noise std must be 1");
  for (double s : sigmas) SSG_CHECK(s >= 0, invalid_state, "noise stds must be non-negative");
  SSG_CHECK(z0_star.defined() && z0_star.ndim() == 3 && z0_star.dim(0) == level_dims[0].d &&
                z0_star.dim(1) == level_dims[0].h && z0_star.dim(2) == level_dims[0].w,
            invalid_state, "base noise does not match the coarsest extents");
}

// ----- losses ----------------------------------------------------------------

Var critic_score(const CriticFn& critic, const Var& grid) {
  return ops::mean_all(critic(grid));
}

Var gradient_penalty(const CriticFn& critic, const VoxelGrid& real, const VoxelGrid& fake,
                     Rng& rng) {
  SSG_CHECK(real.dims() == fake.dims(), invalid_input,
            "gradient penalty needs real and fake grids of equal dims");
  const float eps = float(rng.uniform());
  Tensor blend({1, real.d(), real.h(), real.w()});
  const float* a = real.data.data();
  const float* b = fake.data.data();
  for (int64_t i = 0; i < blend.numel(); ++i) blend.data()[i] = eps * a[i] + (1.f - eps) * b[i];

  Var xhat = Var::leaf(std::move(blend));
  Var s = critic_score(critic, xhat);
  Var gs = autograd::grad(s, {xhat}, /*create_graph=*/true)[0];
  if (!gs.defined()) {
    // The critic ignores its input, so the input-gradient norm is 0 and the
    // penalty is exactly (0 - 1)^2.
    return Var::constant(Tensor::scalar(1.0f));
  }
  Var gnorm = ops::sqrt_v(ops::sum_all(ops::mul(gs, gs)));
  Var excess = ops::add_scalar(gnorm, -1.0f);
  return ops::mul(excess, excess);
}

AdvLosses adversarial_losses(const CriticFn& critic, const VoxelGrid& real, const Var& fake,
                             double gp_weight, Rng& rng) {
  const Dims3 dm = real.dims();
  const std::vector<int64_t> want{1, dm.d, dm.h, dm.w};
  SSG_CHECK(fake.defined() && fake.shape() == want, invalid_input,
            "fake volume must be {1,D,H,W} matching the real grid");
  Var real_v = Var::constant(real.data.reshaped({1, dm.d, dm.h, dm.w}));
  Var s_fake = critic_score(critic, fake);
  Var s_real = critic_score(critic, real_v);
  VoxelGrid fake_grid(fake.val().reshaped({dm.d, dm.h, dm.w}));
  Var penalty = gradient_penalty(critic, real, fake_grid, rng);
  Var d_loss = ops::add(ops::sub(s_fake, s_real), ops::scale(penalty, float(gp_weight)));
  return {d_loss, ops::neg(s_fake), penalty};
}

double compute_sigma(const VoxelGrid& rec_prev, const VoxelGrid& x_i, double sigma_hat) {
  SSG_CHECK(rec_prev.dims() == x_i.dims(), invalid_input,
            "reconstruction and target grids must share dims");
  const float* a = rec_prev.data.data();
  const float* b = x_i.data.data();
  double acc = 0;
  for (int64_t i = 0; i < x_i.volume(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    acc += d * d;
  }
  return sigma_hat * std::sqrt(acc / double(x_i.volume()));
}

// ----- optimizer ---------------------------------------------------------------

Adam::Adam(std::vector<Var> params, double lr, double beta1, double beta2, double eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
  slots_.reserve(params.size());
  for (Var& p : params) {
    SSG_CHECK(p.is_leaf(), invalid_input, "optimizer parameters must be leaves");
    Slot s;
    s.param = std::move(p);
    s.m = Tensor::zeros(s.param.shape());
    s.v = Tensor::zeros(s.param.shape());
    slots_.push_back(std::move(s));
  }
}

void Adam::zero_grad() {
  for (Slot& s : slots_) s.param.zero_grad();
}

void Adam::step() {
  for (Slot& s : slots_) {
    if (!s.param.has_grad()) continue;
    s.t += 1;
    const double bc1 = 1.0 - std::pow(b1_, double(s.t));
    const double bc2 = 1.0 - std::pow(b2_, double(s.t));
    const float* g = s.param.grad().data();
    float* m = s.m.data();
    float* v = s.v.data();
    float* p = s.param.mutable_val().data();
    for (int64_t i = 0; i < s.param.numel(); ++i) {
      m[i] = float(b1_ * m[i] + (1.0 - b1_) * g[i]);
      v[i] = float(b2_ * v[i] + (1.0 - b2_) * double(g[i]) * double(g[i]));
      const double mh = double(m[i]) / bc1;
      const double vh = double(v[i]) / bc2;
      p[i] = float(double(p[i]) - lr_ * mh / (std::sqrt(vh) + eps_));
    }
  }
}

// ----- orchestration -----------------------------------------------------------

NoiseSpec reconstruction_noise(const ModelStack& stack) {
  SSG_CHECK(stack.z0_star.defined(), invalid_state, "no base reconstruction noise drawn");
  NoiseSpec ns;
  ns.z0 = stack.z0_star;
  ns.planes.reserve(stack.level_dims.size() - 1);
  for (size_t i = 1; i < stack.level_dims.size(); ++i) {
    const Dims3 dm = stack.level_dims[i];
    PlaneNoise pn;
    pn.xy = Tensor::zeros({dm.d, dm.h});
    pn.xz = Tensor::zeros({dm.d, dm.w});
    pn.yz = Tensor::zeros({dm.h, dm.w});
    ns.planes.push_back(std::move(pn));
  }
  return ns;
}

TriPlane cascade_planes(const ModelStack& stack, const NoiseSpec& noise, int upto) {
  SSG_CHECK(upto >= 0 && upto < int(stack.generators.size()), invalid_input,
            "requested level is not trained");
  SSG_CHECK(int(noise.planes.size()) >= upto, invalid_input, "noise spec has too few levels");
  SSG_CHECK(noise.z0.defined() && noise.z0.ndim() == 3, invalid_input,
            "base noise must be a rank-3 volume");
  const Dims3 base{noise.z0.dim(0), noise.z0.dim(1), noise.z0.dim(2)};
  const std::vector<Dims3> dims = scaled_level_dims(stack.level_dims, base);

  autograd::NoGradGuard ng;
  TriPlaneVar t = generator_forward(stack.generators[0], project(stack.p, noise.z0), nullptr);
  for (int k = 1; k <= upto; ++k) {
    TriPlane up = upsample_triplane(triplane_value(t), dims[size_t(k)]);
    t = generator_forward(stack.generators[size_t(k)], triplane_constant(up),
                          &noise.planes[size_t(k - 1)]);
  }
  return triplane_value(t);
}

TrainState init_training(VoxelPyramid pyramid, TrainConfig config) {
  config.validate();
  SSG_CHECK(!pyramid.levels.empty(), invalid_input, "pyramid has no levels");
  for (const VoxelGrid& g : pyramid.levels) {
    const Dims3 dm = g.dims();
    SSG_CHECK(dm.d >= 11 && dm.h >= 11 && dm.w >= 11, invalid_input,
              "every pyramid level must span the critic's 11-voxel patch per axis");
  }
  TrainState st;
  st.pyramid = std::move(pyramid);
  st.config = config;
  st.stack.config = config;
  st.stack.level_dims.reserve(st.pyramid.levels.size());
  for (const VoxelGrid& g : st.pyramid.levels) st.stack.level_dims.push_back(g.dims());

  const Dims3 d0 = st.stack.level_dims.front();
  st.stack.z0_star = Tensor({d0.d, d0.h, d0.w});
  Rng::derive(config.seed, kStreamBase, 0)
      .fill_normal(st.stack.z0_star.data(), st.stack.z0_star.numel(), 1.0f);
  return st;
}

void train_scale(TrainState& st, int level, std::ostream* log) {
  SSG_CHECK(level == st.completed_scales, invalid_state,
            "scales must be trained in order, lowest first");
  SSG_CHECK(level < int(st.pyramid.levels.size()), invalid_input, "level beyond the pyramid");
  const TrainConfig& cfg = st.config;
  const VoxelGrid& x_i = st.pyramid.levels[size_t(level)];
  const Dims3 dims_i = x_i.dims();

  // Level-local initialization from derived streams, so any scale's setup
  // replays identically on resume.
  Rng init_rng = Rng::derive(cfg.seed, kStreamInit, uint64_t(level));
  if (level == 0) st.stack.p = make_projection(cfg.channels, cfg.pool_bins, init_rng);
  GeneratorLevel gen = make_generator(cfg.channels, /*has_skip_and_noise=*/level > 0, init_rng);
  OccupancyDecoder dec_store = level == 0 ? make_decoder(cfg.channels, cfg.hidden, init_rng)
                                          : st.stack.decoders.back().clone();
  DecoderVars dec = decoder_vars(dec_store);
  if (level == 0) st.critic = make_discriminator(1, cfg.critic_width, init_rng);

  // Noise std for this level: how much the frozen stack below still misses
  // the target, measured on the fixed reconstruction path.
  double sigma_i = 1.0;
  TriPlane rec_in;  // reconstruction input planes, already at this level's extents
  if (level > 0) {
    TriPlane prev = cascade_planes(st.stack, reconstruction_noise(st.stack), level - 1);
    const Dims3 dp = st.stack.level_dims[size_t(level - 1)];
    VoxelGrid rec_prev = decode_grid(prev, st.stack.decoders.back(), dp);
    VoxelGrid up(dims_i);
    kernels::resize_grid_trilinear(rec_prev.data.data(), int(dp.d), int(dp.h), int(dp.w),
                                   up.data.data(), int(dims_i.d), int(dims_i.h), int(dims_i.w));
    sigma_i = compute_sigma(up, x_i, cfg.sigma_hat);
    rec_in = upsample_triplane(prev, dims_i);
  }

  std::vector<double> sigmas = st.stack.sigmas;
  sigmas.push_back(sigma_i);
  const std::vector<Dims3> prefix_dims(st.stack.level_dims.begin(),
                                       st.stack.level_dims.begin() + level + 1);

  Adam d_opt(st.critic.params(), cfg.lr, cfg.adam_beta1, cfg.adam_beta2);
  std::vector<Var> g_params = gen.params();
  {
    std::vector<Var> dp = dec.params();
    g_params.insert(g_params.end(), dp.begin(), dp.end());
  }
  if (level == 0) {
    std::vector<Var> pp = st.stack.p.params();
    g_params.insert(g_params.end(), pp.begin(), pp.end());
  }
  Adam g_opt(g_params, cfg.lr, cfg.adam_beta1, cfg.adam_beta2);

  Rng noise_seeds = Rng::derive(cfg.seed, kStreamNoise, uint64_t(level));
  Rng eps_rng = Rng::derive(cfg.seed, kStreamEps, uint64_t(level));

  CriticFn critic_fn = [&st](const Var& x) { return discriminator_forward(st.critic, x); };

  // Decoded volume at this level from a fresh draw; records through the
  // level's own nets (and the projection at the base level) only.
  auto fake_volume = [&](const NoiseSpec& ns) {
    TriPlaneVar t_in;
    if (level == 0) {
      t_in = project(st.stack.p, ns.z0);
    } else {
      TriPlane pre = cascade_planes(st.stack, ns, level - 1);
      t_in = triplane_constant(upsample_triplane(pre, dims_i));
    }
    TriPlaneVar t =
        generator_forward(gen, t_in, level == 0 ? nullptr : &ns.planes[size_t(level - 1)]);
    return decode_volume(t, dec);
  };
  auto rec_volume = [&]() {
    TriPlaneVar t_in =
        level == 0 ? project(st.stack.p, st.stack.z0_star) : triplane_constant(rec_in);
    return decode_volume(generator_forward(gen, t_in, nullptr), dec);
  };

  Var x_real = Var::constant(x_i.data.reshaped({1, dims_i.d, dims_i.h, dims_i.w}));

  for (int iter = 1; iter <= cfg.iters_per_scale; ++iter) {
    double d_loss = 0, g_loss = 0, rec_loss = 0;
    for (int s = 0; s < cfg.d_steps; ++s) {
      NoiseSpec ns = sample_noise(prefix_dims, prefix_dims[0], sigmas, noise_seeds.next_u64());
      Tensor fake;
      {
        autograd::NoGradGuard ng;
        fake = fake_volume(ns).val();
      }
      d_opt.zero_grad();
      AdvLosses al =
          adversarial_losses(critic_fn, x_i, Var::constant(fake), cfg.gp_weight, eps_rng);
      autograd::backward(al.d_loss, st.critic.params());
      d_opt.step();
      d_loss = double(al.d_loss.val().item());
    }
    for (int s = 0; s < cfg.g_steps; ++s) {
      NoiseSpec ns = sample_noise(prefix_dims, prefix_dims[0], sigmas, noise_seeds.next_u64());
      Var fake = fake_volume(ns);
      Var adv = ops::neg(critic_score(critic_fn, fake));
      Var rec = ops::mse(rec_volume(), x_real);
      Var total = ops::add(adv, ops::scale(rec, float(cfg.alpha)));
      g_opt.zero_grad();
      autograd::backward(total, g_params);
      g_opt.step();
      g_loss = double(adv.val().item());
      rec_loss = double(rec.val().item());
    }
    check_finite(d_loss, g_loss, rec_loss, level, iter);
    if (log && (iter % 100 == 0 || iter == cfg.iters_per_scale)) {
      char line[160];
      std::snprintf(line, sizeof line, "level=%d iter=%d d_loss=%.6g g_loss=%.6g rec_loss=%.6g\n",
                    level, iter, d_loss, g_loss, rec_loss);
      (*log) << line;
      log->flush();
    }
  }

  st.stack.generators.push_back(std::move(gen));
  st.stack.decoders.push_back(decoder_snapshot(dec));
  st.stack.sigmas.push_back(sigma_i);
  st.completed_scales += 1;
}

ModelStack train_all(const VoxelPyramid& pyramid, const TrainConfig& config, std::ostream* log,
                     const std::function<void(const TrainState&, int)>& scale_done) {
  TrainState st = init_training(pyramid, config);
  const int levels = int(st.pyramid.levels.size());
  for (int lvl = 0; lvl < levels; ++lvl) {
    train_scale(st, lvl, log);
    if (scale_done) scale_done(st, lvl);
  }
  st.stack.validate();
  return std::move(st.stack);
}

}  // namespace ssg
