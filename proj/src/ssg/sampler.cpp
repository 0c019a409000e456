#include "ssg/sampler.hpp"

#include <cmath>
#include <vector>

#include "ssg/nets.hpp"

namespace ssg {

namespace {

bool is_unset(Dims3 d) { return d.d == 0 && d.h == 0 && d.w == 0; }

void check_dims_field(Dims3 d, const char* what) {
  if (is_unset(d)) return;
  SSG_CHECK(d.d >= 1 && d.h >= 1 && d.w >= 1, invalid_input,
            std::string(what) + " must be >= 1 per axis (or all zero for the default)");
}

Dims3 resolve_coarse(const ModelStack& stack, Dims3 requested) {
  return is_unset(requested) ? stack.level_dims.front() : requested;
}

// Output extents: explicit dims win; otherwise the (possibly resized)
// finest-level extents stretched by the multiplier.
Dims3 resolve_output(const ModelStack& stack, const GenerationRequest& req, Dims3 coarse) {
  if (!is_unset(req.output_dims)) return req.output_dims;
  const Dims3 finest = scaled_level_dims(stack.level_dims, coarse).back();
  if (req.multiplier == 1.0) return finest;
  auto stretch = [&](int64_t n) { return std::max<int64_t>(1, std::llround(req.multiplier * double(n))); };
  return {stretch(finest.d), stretch(finest.h), stretch(finest.w)};
}

// Zero plane-noise triples matching the stack's levels at `coarse` extents.
std::vector<PlaneNoise> zero_planes(const ModelStack& stack, Dims3 coarse) {
  const std::vector<Dims3> dims = scaled_level_dims(stack.level_dims, coarse);
  std::vector<PlaneNoise> planes;
  planes.reserve(dims.size() - 1);
  for (size_t i = 1; i < dims.size(); ++i) {
    PlaneNoise pn;
    pn.xy = Tensor::zeros({dims[i].d, dims[i].h});
    pn.xz = Tensor::zeros({dims[i].d, dims[i].w});
    pn.yz = Tensor::zeros({dims[i].h, dims[i].w});
    planes.push_back(std::move(pn));
  }
  return planes;
}

VoxelGrid decode_at(const ModelStack& stack, const NoiseSpec& noise, Dims3 out_dims) {
  TriPlane t = cascade(stack, noise);
  return decode_grid(t, stack.decoders.back(), out_dims);
}

VoxelGrid finish(VoxelGrid grid, const GenerationRequest& req) {
  return req.binarize ? binarize_grid(grid) : grid;
}

VoxelGrid run_interpolate(const ModelStack& stack, const GenerationRequest& req, Dims3 coarse,
                          Dims3 out_dims) {
  const Tensor za = draw_noise(stack, coarse, req.seed_a).z0;
  NoiseSpec ns;
  if (req.alpha == 0.0) {
    ns.z0 = za;
  } else {
    const Tensor zb = draw_noise(stack, coarse, req.seed_b).z0;
    if (req.alpha == 1.0) {
      ns.z0 = zb;
    } else {
      const float a = float(req.alpha);
      ns.z0 = Tensor(za.shape());
      for (int64_t i = 0; i < za.numel(); ++i)
        ns.z0.data()[i] = (1.0f - a) * za.data()[i] + a * zb.data()[i];
    }
  }
  ns.planes = req.fixed_planes == FixedPlaneNoise::zeros
                  ? zero_planes(stack, coarse)
                  : draw_noise(stack, coarse, req.seed).planes;
  return decode_at(stack, ns, out_dims);
}

}  // namespace

void GenerationRequest::validate() const {
  check_dims_field(coarse_dims, "coarse_dims");
  check_dims_field(output_dims, "output_dims");
  SSG_CHECK(multiplier >= 1.0, invalid_input, "multiplier must be >= 1");
  SSG_CHECK(std::isfinite(alpha), invalid_input, "alpha must be finite");
}

NoiseSpec draw_noise(const ModelStack& stack, Dims3 coarse_dims, uint64_t seed) {
  stack.validate();
  return sample_noise(stack.level_dims, coarse_dims, stack.sigmas, seed);
}

TriPlane cascade(const ModelStack& stack, const NoiseSpec& noise) {
  stack.validate();
  return cascade_planes(stack, noise, stack.num_scales());
}

VoxelGrid generate(const ModelStack& stack, const GenerationRequest& request) {
  stack.validate();
  request.validate();
  const Dims3 coarse = resolve_coarse(stack, request.coarse_dims);
  const Dims3 out_dims = resolve_output(stack, request, coarse);
  switch (request.mode) {
    case GenMode::reconstruct:
      return finish(reconstruct(stack, out_dims), request);
    case GenMode::interpolate:
      return finish(run_interpolate(stack, request, coarse, out_dims), request);
    case GenMode::random:
      break;
  }
  return finish(decode_at(stack, draw_noise(stack, coarse, request.seed), out_dims), request);
}

VoxelGrid reconstruct(const ModelStack& stack, Dims3 output_dims) {
  stack.validate();
  check_dims_field(output_dims, "output_dims");
  const Dims3 out = is_unset(output_dims) ? stack.level_dims.back() : output_dims;
  return decode_at(stack, reconstruction_noise(stack), out);
}

VoxelGrid interpolate(const ModelStack& stack, const GenerationRequest& request) {
  stack.validate();
  request.validate();
  const Dims3 coarse = resolve_coarse(stack, request.coarse_dims);
  return finish(run_interpolate(stack, request, coarse, resolve_output(stack, request, coarse)),
                request);
}

VoxelGrid binarize_grid(const VoxelGrid& grid) {
  VoxelGrid out(grid.dims());
  for (int64_t i = 0; i < grid.volume(); ++i)
    out.data.data()[i] = grid.data.data()[i] > 0.5f ? 1.0f : 0.0f;
  return out;
}

}  // namespace ssg
