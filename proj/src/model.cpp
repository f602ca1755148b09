#include "mae/model.hpp"

#include "mae/datasets.hpp"
#include "mae/error.hpp"
#include "mae/io.hpp"

#include <cmath>
#include <random>

namespace mae {

namespace {

constexpr std::string_view kCheckpointMagic = "MAECP1";

std::vector<DenseLayer> init_stack(const std::vector<std::size_t>& widths, std::mt19937_64& rng) {
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const auto in = static_cast<Eigen::Index>(widths[i]);
    const auto out = static_cast<Eigen::Index>(widths[i + 1]);
    const double bound = glorot_bound(in, out);
    DenseLayer layer;
    layer.weight.resize(in, out);
    for (Eigen::Index r = 0; r < in; ++r) {
      for (Eigen::Index c = 0; c < out; ++c) layer.weight(r, c) = bound * (2.0 * uniform01(rng()) - 1.0);
    }
    layer.bias = Matrix::Zero(1, out);
    layers.push_back(std::move(layer));
  }
  return layers;
}

ad::Var run_stack(const std::vector<std::pair<ad::Var, ad::Var>>& layers, ad::Var x) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = ad::add_row(ad::matmul(x, layers[i].first), layers[i].second);
    if (i + 1 < layers.size()) x = ad::tanh(x);
  }
  return x;
}

// Row by row, so a point's output does not depend on its batch neighbors.
Matrix run_numeric(const MlpModel& model, bool encoder, const Matrix& x) {
  const std::vector<DenseLayer>& layers = encoder ? model.encoder : model.decoder;
  Matrix out(x.rows(), layers.back().out());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    Eigen::RowVectorXd h = x.row(r);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      Eigen::RowVectorXd next = h * layers[l].weight + layers[l].bias;
      if (l + 1 < layers.size()) next = next.array().tanh().matrix();
      h = std::move(next);
    }
    out.row(r) = h;
  }
  return out;
}

}  // namespace

double glorot_bound(Eigen::Index fan_in, Eigen::Index fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

std::size_t MlpModel::parameter_count() const {
  std::size_t total = 0;
  for (const Matrix* p : parameters()) total += static_cast<std::size_t>(p->size());
  return total;
}

void MlpModel::validate() const {
  if (encoder.empty() || decoder.empty()) throw Error(ErrorKind::Shape, "model needs encoder and decoder layers");
  auto chain = [](const std::vector<DenseLayer>& layers, const char* what) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].bias.rows() != 1 || layers[i].bias.cols() != layers[i].out()) {
        throw Error(ErrorKind::Shape, std::string(what) + " layer " + std::to_string(i) + " bias size mismatch");
      }
      if (i > 0 && layers[i].in() != layers[i - 1].out()) {
        throw Error(ErrorKind::Shape, std::string(what) + " layer " + std::to_string(i) + " does not chain");
      }
    }
  };
  chain(encoder, "encoder");
  chain(decoder, "decoder");
  if (decoder.front().in() != latent_dim()) throw Error(ErrorKind::Shape, "decoder input must equal latent dim");
  if (decoder.back().out() != ambient_dim()) throw Error(ErrorKind::Shape, "decoder output must equal ambient dim");
  if (latent_dim() >= ambient_dim()) throw Error(ErrorKind::Shape, "latent dim must be smaller than ambient dim");
}

std::vector<Matrix*> MlpModel::parameters() {
  std::vector<Matrix*> out;
  for (auto* stack : {&encoder, &decoder}) {
    for (DenseLayer& layer : *stack) {
      out.push_back(&layer.weight);
      out.push_back(&layer.bias);
    }
  }
  return out;
}

std::vector<const Matrix*> MlpModel::parameters() const {
  std::vector<const Matrix*> out;
  for (Matrix* p : const_cast<MlpModel*>(this)->parameters()) out.push_back(p);
  return out;
}

bool identical(const MlpModel& a, const MlpModel& b) {
  if (a.activation != b.activation) return false;
  auto pa = a.parameters();
  auto pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->rows() != pb[i]->rows() || pa[i]->cols() != pb[i]->cols()) return false;
    if (*pa[i] != *pb[i]) return false;
  }
  return true;
}

MlpModel init_model(const ModelShape& shape, std::uint64_t seed) {
  if (shape.latent_dim == 0 || shape.ambient_dim == 0) throw Error(ErrorKind::Shape, "dimensions must be positive");
  for (std::size_t w : shape.encoder_hidden) if (w == 0) throw Error(ErrorKind::Shape, "hidden width must be positive");
  for (std::size_t w : shape.decoder_hidden) if (w == 0) throw Error(ErrorKind::Shape, "hidden width must be positive");
  std::vector<std::size_t> enc{shape.ambient_dim};
  enc.insert(enc.end(), shape.encoder_hidden.begin(), shape.encoder_hidden.end());
  enc.push_back(shape.latent_dim);
  std::vector<std::size_t> dec{shape.latent_dim};
  dec.insert(dec.end(), shape.decoder_hidden.begin(), shape.decoder_hidden.end());
  dec.push_back(shape.ambient_dim);

  std::mt19937_64 rng(seed);
  MlpModel model;
  model.activation = shape.activation;
  model.encoder = init_stack(enc, rng);
  model.decoder = init_stack(dec, rng);
  model.validate();
  return model;
}

ModelVars bind(ad::Tape& tape, const MlpModel& model, bool trainable) {
  ModelVars vars;
  vars.activation = model.activation;
  auto reg = [&](const std::vector<DenseLayer>& layers, const char* prefix, auto& out) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const std::string base = std::string(prefix) + "." + std::to_string(i);
      if (trainable) {
        out.emplace_back(tape.parameter(layers[i].weight, base + ".w"), tape.parameter(layers[i].bias, base + ".b"));
      } else {
        out.emplace_back(tape.constant(layers[i].weight), tape.constant(layers[i].bias));
      }
    }
  };
  reg(model.encoder, "enc", vars.encoder);
  reg(model.decoder, "dec", vars.decoder);
  return vars;
}

std::vector<ad::Var> ModelVars::all() const {
  std::vector<ad::Var> out;
  for (const auto* stack : {&encoder, &decoder}) {
    for (const auto& [w, b] : *stack) {
      out.push_back(w);
      out.push_back(b);
    }
  }
  return out;
}

ad::Var encode(const ModelVars& vars, ad::Var x) { return run_stack(vars.encoder, x); }
ad::Var decode(const ModelVars& vars, ad::Var z) { return run_stack(vars.decoder, z); }

Matrix encode(const MlpModel& model, const Matrix& x) {
  if (x.cols() != model.ambient_dim()) {
    throw Error(ErrorKind::Shape, "encode expects " + std::to_string(model.ambient_dim()) + " columns, got " +
                                      std::to_string(x.cols()));
  }
  return run_numeric(model, true, x);
}

Matrix decode(const MlpModel& model, const Matrix& z) {
  if (z.cols() != model.latent_dim()) {
    throw Error(ErrorKind::Shape, "decode expects " + std::to_string(model.latent_dim()) + " columns, got " +
                                      std::to_string(z.cols()));
  }
  return run_numeric(model, false, z);
}

ad::Jacobian decoder_jacobian(const MlpModel& model, const Eigen::RowVectorXd& z) {
  if (z.size() != model.latent_dim()) throw Error(ErrorKind::Shape, "latent point has wrong dimension");
  ad::Tape tape;
  ad::Var in = tape.input(Matrix(z), "z");
  ModelVars vars = bind(tape, model, false);
  tape.set_output(decode(vars, in));
  return ad::jacobian(tape, std::span<const double>(z.data(), static_cast<std::size_t>(z.size())));
}

Matrix gram(const Matrix& j) {
  const Eigen::Index l = j.cols();
  Matrix h(l, l);
  for (Eigen::Index a = 0; a < l; ++a) {
    for (Eigen::Index b = a; b < l; ++b) {
      double s = 0.0;
      for (Eigen::Index r = 0; r < j.rows(); ++r) s += j(r, a) * j(r, b);
      h(a, b) = s;
      h(b, a) = s;
    }
  }
  return h;
}

Matrix decoder_pullback(const MlpModel& model, const Eigen::RowVectorXd& z) {
  Matrix h = gram(decoder_jacobian(model, z).matrix());
  if (!h.allFinite()) throw Error(ErrorKind::Numeric, "decoder pullback is not finite");
  return h;
}

std::string encode_checkpoint(const MlpModel& model) {
  model.validate();
  io::ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u64(static_cast<std::uint64_t>(model.ambient_dim()));
  w.u64(static_cast<std::uint64_t>(model.latent_dim()));
  w.u64(static_cast<std::uint64_t>(model.activation));
  for (const auto* stack : {&model.encoder, &model.decoder}) {
    w.u64(stack->size());
    for (const DenseLayer& layer : *stack) {
      w.u64(static_cast<std::uint64_t>(layer.in()));
      w.u64(static_cast<std::uint64_t>(layer.out()));
    }
  }
  for (const auto* stack : {&model.encoder, &model.decoder}) {
    for (const DenseLayer& layer : *stack) {
      for (Eigen::Index r = 0; r < layer.in(); ++r) {
        for (Eigen::Index c = 0; c < layer.out(); ++c) w.f64(layer.weight(r, c));
      }
      for (Eigen::Index c = 0; c < layer.out(); ++c) w.f64(layer.bias(0, c));
    }
  }
  return w.str();
}

MlpModel decode_checkpoint(std::string_view bytes) {
  io::ByteReader r(bytes);
  r.expect(kCheckpointMagic, "checkpoint");
  const std::uint64_t n = r.u64();
  const std::uint64_t l = r.u64();
  const std::uint64_t act = r.u64();
  if (act != static_cast<std::uint64_t>(Activation::Tanh)) throw Error(ErrorKind::Parse, "unknown activation id");
  MlpModel model;
  model.activation = static_cast<Activation>(act);
  for (auto* stack : {&model.encoder, &model.decoder}) {
    const std::uint64_t count = r.u64();
    if (count == 0 || count > 1024) throw Error(ErrorKind::Parse, "implausible layer count in checkpoint");
    for (std::uint64_t i = 0; i < count; ++i) {
      const std::uint64_t in = r.u64();
      const std::uint64_t out = r.u64();
      if (in == 0 || out == 0 || in > (1u << 20) || out > (1u << 20)) {
        throw Error(ErrorKind::Parse, "implausible layer shape in checkpoint");
      }
      DenseLayer layer;
      layer.weight.resize(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out));
      layer.bias.resize(1, static_cast<Eigen::Index>(out));
      stack->push_back(std::move(layer));
    }
  }
  for (auto* stack : {&model.encoder, &model.decoder}) {
    for (DenseLayer& layer : *stack) {
      for (Eigen::Index rr = 0; rr < layer.in(); ++rr) {
        for (Eigen::Index c = 0; c < layer.out(); ++c) layer.weight(rr, c) = r.f64();
      }
      for (Eigen::Index c = 0; c < layer.out(); ++c) layer.bias(0, c) = r.f64();
    }
  }
  if (!r.at_end()) throw Error(ErrorKind::Parse, "trailing bytes after checkpoint");
  model.validate();
  if (static_cast<std::uint64_t>(model.ambient_dim()) != n || static_cast<std::uint64_t>(model.latent_dim()) != l) {
    throw Error(ErrorKind::Parse, "checkpoint header disagrees with layer shapes");
  }
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const MlpModel& model) {
  io::write_atomic(path, encode_checkpoint(model));
}

MlpModel load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace mae
