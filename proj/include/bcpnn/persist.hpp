#ifndef BCPNN_PERSIST_HPP
#define BCPNN_PERSIST_HPP

// Binary containers.
//
// Model file ("BCP1"), all integers and reals little-endian:
//   "BCP1" | u32 version | u32 kind | chunk* | u32 crc32(all preceding bytes)
//   chunk = 4-byte tag | u64 payload length | payload
//
// kind 0 (unsup):  GEOM PARM <projection>
// kind 1 (assoc):  GEOM PARM <projection>
// kind 2..4 (go, nogo, gonogo): GEOM PARM <projection go> <projection nogo>
// kind 5 (linear): GEOM LHYP THTA ADAM
// <projection> = MASK PSRC PTGT PJNT BIAS WGHT
//   MASK: u64 n_src_hc, u64 n_tgt_hc, u64 k, source-major bit-packed matrix
//   PSRC/PTGT/PJNT/BIAS/WGHT: u64 count, f64[count]; PJNT and WGHT are
//   target-major (all sources of target unit 0 first)
//
// Representation cache ("BREP"):
//   "BREP" | u32 version | u64 rows | u64 cols | u64 model fingerprint |
//   u64 n_mc | u32 split (0 train, 1 test) | f32[rows*cols] row-major

#include <filesystem>
#include <variant>

#include "binary_io.hpp"
#include "classifiers.hpp"
#include "unsup.hpp"

namespace bcpnn {

inline constexpr std::uint32_t kModelFormatVersion = 1;
inline constexpr std::uint32_t kRepFormatVersion = 1;

enum class ModelKind : std::uint32_t { unsup = 0, assoc = 1, go = 2, nogo = 3, gonogo = 4, linear = 5 };

inline ModelKind model_kind_of(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::assoc: return ModelKind::assoc;
    case ClassifierKind::go: return ModelKind::go;
    case ClassifierKind::nogo: return ModelKind::nogo;
    case ClassifierKind::gonogo: return ModelKind::gonogo;
    case ClassifierKind::linear: return ModelKind::linear;
  }
  return ModelKind::assoc;
}

namespace detail {

class ChunkWriter {
public:
  template <class Fn>
  void chunk(std::string_view tag, Fn&& fill) {
    io::Writer body;
    fill(body);
    out_.tag(tag);
    out_.u64(body.buffer().size());
    out_.bytes(body.buffer());
  }
  io::Writer& raw() noexcept { return out_; }

private:
  io::Writer out_;
};

class ChunkReader {
public:
  explicit ChunkReader(io::Reader& r) : r_(r) {}

  /// Reader over the payload of the next chunk, which must carry `tag`.
  io::Reader expect(std::string_view tag) {
    const auto got = r_.tag(4);
    if (got != tag) throw FormatError("expected chunk " + std::string(tag) + ", found " + got);
    const auto len = r_.u64();
    if (len > r_.remaining()) throw LengthError("chunk " + got + " extends past end of file");
    payload_ = r_.bytes(static_cast<std::size_t>(len));
    return io::Reader(payload_);
  }

private:
  io::Reader& r_;
  std::vector<unsigned char> payload_;
};

inline void write_vec(io::Writer& w, std::span<const double> v) {
  w.u64(v.size());
  w.f64s(v);
}

inline std::vector<double> read_vec(io::Reader& r, std::size_t expected) {
  const auto n = r.u64();
  if (n != expected) throw FormatError("array length " + std::to_string(n) + ", expected " + std::to_string(expected));
  return r.f64s(static_cast<std::size_t>(n));
}

inline void write_projection(ChunkWriter& cw, const Projection& p) {
  const auto& tr = p.traces();
  const WeightSet ws = p.materialized() ? *p.materialized() : derive_weights(tr, p.mask());
  cw.chunk("MASK", [&](io::Writer& w) {
    w.u64(p.mask().n_src_hc());
    w.u64(p.mask().n_tgt_hc());
    w.u64(p.mask().k());
    w.bytes(p.mask().pack_bits());
  });
  cw.chunk("PSRC", [&](io::Writer& w) { write_vec(w, tr.src_values()); });
  cw.chunk("PTGT", [&](io::Writer& w) { write_vec(w, tr.tgt_values()); });
  cw.chunk("PJNT", [&](io::Writer& w) { write_vec(w, tr.joint_values()); });
  cw.chunk("BIAS", [&](io::Writer& w) { write_vec(w, ws.bias); });
  cw.chunk("WGHT", [&](io::Writer& w) { write_vec(w, ws.weights); });
}

inline Projection read_projection(ChunkReader& cr, LayerGeometry src, LayerGeometry tgt, double epsilon) {
  auto m = cr.expect("MASK");
  const auto n_src_hc = m.u64(), n_tgt_hc = m.u64(), k = m.u64();
  if (n_src_hc != src.n_hc || n_tgt_hc != tgt.n_hc) throw FormatError("mask shape does not match geometry");
  auto mask = ConnectivityMask::unpack_bits(n_src_hc, n_tgt_hc, k, m.bytes(m.remaining()));

  ProbabilityTraces tr(src, tgt, epsilon, 0.0);
  auto load = [&](std::string_view tag, std::span<double> dst) {
    auto r = cr.expect(tag);
    const auto v = read_vec(r, dst.size());
    std::copy(v.begin(), v.end(), dst.begin());
  };
  load("PSRC", tr.src_values());
  load("PTGT", tr.tgt_values());
  load("PJNT", tr.joint_values());

  Projection p(std::move(tr), std::move(mask));
  WeightSet ws;
  ws.n_src = src.units();
  {
    auto r = cr.expect("BIAS");
    ws.bias = read_vec(r, tgt.units());
  }
  {
    auto r = cr.expect("WGHT");
    ws.weights = read_vec(r, src.units() * tgt.units());
  }
  p.adopt_weights(std::move(ws));
  return p;
}

inline void write_params(io::Writer& w, const BcpnnParams& p) {
  w.f64(p.dt);
  w.f64(p.tau_p);
  w.f64(p.kappa);
  w.f64(p.epsilon);
}

inline BcpnnParams read_params(io::Reader& r) {
  BcpnnParams p;
  p.dt = r.f64();
  p.tau_p = r.f64();
  p.kappa = r.f64();
  p.epsilon = r.f64();
  return p;
}

inline void write_geometry(io::Writer& w, const LayerGeometry& g) {
  w.u64(g.n_hc);
  w.u64(g.n_mc);
}

inline LayerGeometry read_geometry(io::Reader& r) {
  const auto hc = r.u64();
  const auto mc = r.u64();
  if (hc == 0 || mc == 0 || hc > (1u << 24) || mc > (1u << 24)) throw FormatError("implausible layer geometry");
  return LayerGeometry(static_cast<std::size_t>(hc), static_cast<std::size_t>(mc));
}

inline std::vector<unsigned char> finish(ChunkWriter& cw) {
  auto& buf = cw.raw().buffer();
  const auto crc = io::crc32(buf);
  cw.raw().u32(crc);
  return std::move(buf);
}

inline ChunkWriter start(ModelKind kind) {
  ChunkWriter cw;
  cw.raw().tag("BCP1");
  cw.raw().u32(kModelFormatVersion);
  cw.raw().u32(static_cast<std::uint32_t>(kind));
  return cw;
}

/// Validate envelope and checksum; returns the reader positioned after the
/// header together with the model kind.
inline std::pair<ModelKind, std::size_t> open_envelope(std::span<const unsigned char> data) {
  if (data.size() < 16) throw LengthError("model file truncated");
  io::Reader r(data);
  if (r.tag(4) != "BCP1") throw FormatError("not a model file (bad magic)");
  const auto version = r.u32();
  if (version != kModelFormatVersion)
    throw VersionError("unsupported model format version " + std::to_string(version));
  const auto kind = r.u32();
  if (kind > static_cast<std::uint32_t>(ModelKind::linear)) throw FormatError("unknown model kind " + std::to_string(kind));
  io::Reader tail(data.subspan(data.size() - 4));
  if (tail.u32() != io::crc32(data.first(data.size() - 4)))
    throw FormatError("model file checksum mismatch (truncated or corrupted)");
  return {static_cast<ModelKind>(kind), r.position()};
}

} // namespace detail

inline std::vector<unsigned char> serialize(const UnsupModel& m) {
  auto cw = detail::start(ModelKind::unsup);
  cw.chunk("GEOM", [&](io::Writer& w) {
    detail::write_geometry(w, m.input_geometry);
    detail::write_geometry(w, m.hidden_geometry);
  });
  cw.chunk("PARM", [&](io::Writer& w) {
    detail::write_params(w, m.params);
    w.u32(static_cast<std::uint32_t>(m.encoding.mode));
    w.f64(m.encoding.threshold);
    w.u64(m.seed);
    w.u64(m.samples_seen);
    w.u64(m.rewire_events);
  });
  detail::write_projection(cw, m.projection);
  return detail::finish(cw);
}

inline std::vector<unsigned char> serialize(const Classifier& c) {
  const auto kind = model_kind_of(c.kind());
  auto cw = detail::start(kind);
  std::visit([&](const auto& head) {
    using T = std::decay_t<decltype(head)>;
    if constexpr (std::is_same_v<T, LinearClassifier>) {
      cw.chunk("GEOM", [&](io::Writer& w) { detail::write_geometry(w, head.input_geometry); });
      cw.chunk("LHYP", [&](io::Writer& w) {
        w.f64(head.hp.lr);
        w.f64(head.hp.beta1);
        w.f64(head.hp.beta2);
        w.f64(head.hp.delta);
        w.u64(head.hp.batch);
        w.u64(head.hp.epochs);
      });
      cw.chunk("THTA", [&](io::Writer& w) { detail::write_vec(w, head.theta); });
      cw.chunk("ADAM", [&](io::Writer& w) {
        w.u64(head.adam.t);
        detail::write_vec(w, head.adam.m);
        detail::write_vec(w, head.adam.v);
      });
    } else {
      const Projection& first = [&]() -> const Projection& {
        if constexpr (std::is_same_v<T, AssocClassifier>) return head.projection;
        else return head.go;
      }();
      cw.chunk("GEOM", [&](io::Writer& w) {
        detail::write_geometry(w, first.src_geometry());
        detail::write_geometry(w, first.tgt_geometry());
      });
      cw.chunk("PARM", [&](io::Writer& w) { detail::write_params(w, head.params); });
      detail::write_projection(cw, first);
      if constexpr (std::is_same_v<T, GoNogoClassifier>) detail::write_projection(cw, head.nogo);
    }
  }, c.get());
  return detail::finish(cw);
}

using AnyModel = std::variant<UnsupModel, Classifier>;

inline AnyModel deserialize(std::span<const unsigned char> data) {
  const auto [kind, offset] = detail::open_envelope(data);
  io::Reader r(data.subspan(offset, data.size() - offset - 4));
  detail::ChunkReader cr(r);

  AnyModel out = [&]() -> AnyModel {
    switch (kind) {
      case ModelKind::unsup: {
        UnsupModel m;
        {
          auto g = cr.expect("GEOM");
          m.input_geometry = detail::read_geometry(g);
          m.hidden_geometry = detail::read_geometry(g);
        }
        {
          auto p = cr.expect("PARM");
          m.params = detail::read_params(p);
          const auto mode = p.u32();
          if (mode > 1) throw FormatError("unknown encoding mode");
          m.encoding.mode = static_cast<EncodingMode>(mode);
          m.encoding.threshold = p.f64();
          m.seed = p.u64();
          m.samples_seen = p.u64();
          m.rewire_events = p.u64();
        }
        m.projection = detail::read_projection(cr, m.input_geometry, m.hidden_geometry, m.params.epsilon);
        return m;
      }
      case ModelKind::linear: {
        LinearClassifier c;
        {
          auto g = cr.expect("GEOM");
          c.input_geometry = detail::read_geometry(g);
        }
        {
          auto h = cr.expect("LHYP");
          c.hp.lr = h.f64();
          c.hp.beta1 = h.f64();
          c.hp.beta2 = h.f64();
          c.hp.delta = h.f64();
          c.hp.batch = h.u64();
          c.hp.epochs = h.u64();
        }
        const std::size_t n = kNumClasses * (c.n_features() + 1);
        {
          auto t = cr.expect("THTA");
          c.theta = detail::read_vec(t, n);
        }
        {
          auto a = cr.expect("ADAM");
          c.adam.t = a.u64();
          c.adam.m = detail::read_vec(a, n);
          c.adam.v = detail::read_vec(a, n);
        }
        return Classifier(std::move(c));
      }
      default: {
        LayerGeometry src, tgt;
        {
          auto g = cr.expect("GEOM");
          src = detail::read_geometry(g);
          tgt = detail::read_geometry(g);
        }
        BcpnnParams params;
        {
          auto p = cr.expect("PARM");
          params = detail::read_params(p);
        }
        auto first = detail::read_projection(cr, src, tgt, params.epsilon);
        if (kind == ModelKind::assoc) return Classifier(AssocClassifier{std::move(first), params});
        auto second = detail::read_projection(cr, src, tgt, params.epsilon);
        const auto variant = kind == ModelKind::go ? GoNogoVariant::go_only
                           : kind == ModelKind::nogo ? GoNogoVariant::nogo_only : GoNogoVariant::combined;
        return Classifier(GoNogoClassifier{std::move(first), std::move(second), variant, params});
      }
    }
  }();
  if (r.remaining() != 0) throw FormatError("trailing bytes after the last chunk");
  return out;
}

inline void save_model(const UnsupModel& m, const std::filesystem::path& path) { io::write_all(path, serialize(m)); }
inline void save_model(const Classifier& c, const std::filesystem::path& path) { io::write_all(path, serialize(c)); }

inline AnyModel load_model(const std::filesystem::path& path) { return deserialize(io::read_all(path)); }

inline UnsupModel load_unsup_model(const std::filesystem::path& path) {
  auto m = load_model(path);
  if (auto* u = std::get_if<UnsupModel>(&m)) return std::move(*u);
  throw FormatError(path.string() + " holds a classifier, not an unsupervised model");
}

inline Classifier load_classifier(const std::filesystem::path& path) {
  auto m = load_model(path);
  if (auto* c = std::get_if<Classifier>(&m)) return std::move(*c);
  throw FormatError(path.string() + " holds an unsupervised model, not a classifier");
}

// ---------------------------------------------------------------------------

inline std::vector<unsigned char> serialize(const RepresentationSet& reps) {
  io::Writer w;
  w.tag("BREP");
  w.u32(kRepFormatVersion);
  w.u64(reps.rows);
  w.u64(reps.cols());
  w.u64(reps.model_fingerprint);
  w.u64(reps.hidden_geometry.n_mc);
  w.u32(reps.split == Split::train ? 0u : 1u);
  w.f32s(reps.values);
  return std::move(w.buffer());
}

inline RepresentationSet deserialize_representations(std::span<const unsigned char> data) {
  io::Reader r(data);
  if (data.size() < 4 || r.tag(4) != "BREP") throw FormatError("not a representation file (bad magic)");
  const auto version = r.u32();
  if (version != kRepFormatVersion) throw VersionError("unsupported representation format version " + std::to_string(version));
  RepresentationSet reps;
  reps.rows = r.u64();
  const auto cols = r.u64();
  reps.model_fingerprint = r.u64();
  const auto n_mc = r.u64();
  const auto split = r.u32();
  if (n_mc == 0 || cols % n_mc != 0) throw FormatError("representation columns not a multiple of n_mc");
  reps.hidden_geometry = LayerGeometry(cols / n_mc, n_mc);
  reps.split = split == 0 ? Split::train : Split::test;
  if (reps.rows != 0 && cols > r.remaining() / 4 / reps.rows) throw LengthError("representation payload truncated");
  reps.values = r.f32s(reps.rows * cols);
  if (r.remaining() != 0) throw FormatError("trailing bytes in representation file");
  return reps;
}

inline void save_representations(const RepresentationSet& reps, const std::filesystem::path& path) {
  io::write_all(path, serialize(reps));
}

inline RepresentationSet load_representations(const std::filesystem::path& path) {
  return deserialize_representations(io::read_all(path));
}

} // namespace bcpnn

#endif
