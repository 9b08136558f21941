#include <doctest.h>

#include <cmath>
#include <cstring>

#include "dfds/dfds.hpp"
#include "dfds/error.hpp"
#include "dfds/training.hpp"

using namespace dfds;
using namespace dfds::model;
using dfds::data::TimeSlot;

namespace {

using LD = long double;

template <typename Scalar>
MatrixX<Scalar> random_mat(Index r, Index c, Rng& rng, double scale = 1.0) {
  MatrixX<Scalar> m(r, c);
  for (Index k = 0; k < m.size(); ++k) m.data()[k] = Scalar(rng.uniform(-scale, scale));
  return m;
}

template <typename Scalar>
GruParams<Scalar> random_gru(Index d, Index x, Rng& rng) {
  GruParams<Scalar> p = GruParams<Scalar>::zeros(d, x);
  p.visit_blocks([&](std::string_view, MatrixX<Scalar>& m) { m = random_mat<Scalar>(m.rows(), m.cols(), rng); });
  return p;
}

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Scalar-by-scalar GRU step, written without Eigen products.
std::vector<double> reference_cell(const std::vector<double>& x, const std::vector<double>& h,
                                   const GruParams<double>& p) {
  const auto d = static_cast<Index>(h.size());
  const auto n = static_cast<Index>(x.size());
  std::vector<double> z(d), r(d), out(d);
  for (Index j = 0; j < d; ++j) {
    double az = p.b_z(j, 0), ar = p.b_r(j, 0);
    for (Index k = 0; k < n; ++k) {
      az += p.w_z(j, k) * x[k];
      ar += p.w_r(j, k) * x[k];
    }
    for (Index k = 0; k < d; ++k) {
      az += p.u_z(j, k) * h[k];
      ar += p.u_r(j, k) * h[k];
    }
    z[j] = sig(az);
    r[j] = sig(ar);
  }
  for (Index j = 0; j < d; ++j) {
    double ah = p.b_h(j, 0);
    for (Index k = 0; k < n; ++k) ah += p.w_h(j, k) * x[k];
    for (Index k = 0; k < d; ++k) ah += p.u_h(j, k) * r[k] * h[k];
    out[j] = (1.0 - z[j]) * h[j] + z[j] * std::tanh(ah);
  }
  return out;
}

Matrix column(const std::vector<double>& v) {
  Matrix m(static_cast<Index>(v.size()), 1);
  for (std::size_t k = 0; k < v.size(); ++k) m(static_cast<Index>(k), 0) = v[k];
  return m;
}

std::vector<double> as_vec(const Matrix& m) { return {m.data(), m.data() + m.size()}; }

// A window whose input starts on a Monday.
data::Window make_window(const std::string& id, std::int64_t offset, std::vector<std::uint8_t> in,
                         std::vector<std::uint8_t> out) {
  return {id, TimeSlot::from_timestamp(1596412800) + offset, std::move(in), std::move(out)};
}

features::ProfileSet random_profiles(Rng& rng, const std::vector<std::string>& ids) {
  std::vector<data::StationSeries> series;
  for (const auto& id : ids) {
    data::StationSeries s{id, TimeSlot::from_timestamp(1596412800), {}};
    for (int k = 0; k < 3 * 96; ++k) s.occupancy.push_back(rng.uniform() < 0.4 ? 1 : 0);
    series.push_back(std::move(s));
  }
  return features::build_static_profiles(series);
}

DfdsConfig tiny_config(int d, int i, int o) {
  DfdsConfig cfg;
  cfg.input_len = i;
  cfg.output_len = o;
  cfg.d_encoder = cfg.d_static = cfg.d_fusion = cfg.d_decoder = d;
  return cfg;
}

// Glorot weights plus small random biases so no ReLU sits exactly on its kink.
template <typename Scalar>
DfdsModel<Scalar> random_dfds(const DfdsConfig& cfg, Rng& rng) {
  auto m = DfdsModel<Scalar>::initialized(cfg, rng);
  m.params.visit_blocks([&](std::string_view name, MatrixX<Scalar>& b) {
    if (name.back() == 'b' || name.find("/b_") != std::string_view::npos) {
      for (Index k = 0; k < b.size(); ++k) b.data()[k] = Scalar(0.1 * rng.normal());
    }
  });
  return m;
}

std::vector<const data::Window*> ptrs(const std::vector<data::Window>& w) {
  std::vector<const data::Window*> out;
  for (const auto& x : w) out.push_back(&x);
  return out;
}

}  // namespace

TEST_CASE("gru cell forward examples") {
  GruParams<double> zero = GruParams<double>::zeros(3, 2);
  GruCellCache<double> cache;
  const Matrix h = gru_cell_forward(column({0.7, -1.2}), Matrix(Matrix::Zero(3, 1)), zero, &cache);
  CHECK(h.isZero(0.0));
  CHECK(cache.z(0, 0) == 0.5);

  GruParams<double> sat = GruParams<double>::zeros(2, 1);
  sat.b_z.setConstant(20.0);
  sat.b_h.setConstant(20.0);
  const Matrix hs = gru_cell_forward(column({0.0}), Matrix(Matrix::Zero(2, 1)), sat);
  CHECK(hs(0, 0) == doctest::Approx(std::tanh(20.0) * sig(20.0)).epsilon(1e-12));
  CHECK(hs(1, 0) > 0.999999);

  CHECK_THROWS_AS(gru_cell_forward(column({1.0, 2.0, 3.0}), Matrix(Matrix::Zero(2, 1)), sat), ShapeError);
}

TEST_CASE("gru cell forward matches a scalar reference") {
  Rng rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    const Index d = 1 + static_cast<Index>(rng.below(5));
    const Index n = 1 + static_cast<Index>(rng.below(4));
    const auto p = random_gru<double>(d, n, rng);
    std::vector<double> x(n), h(d);
    for (auto& v : x) v = rng.uniform(-1, 1);
    for (auto& v : h) v = rng.uniform(-1, 1);
    const auto ref = reference_cell(x, h, p);
    const Matrix got = gru_cell_forward(column(x), column(h), p);
    for (Index j = 0; j < d; ++j) CHECK(std::abs(got(j, 0) - ref[j]) < 1e-14);
  }
}

TEST_CASE("gru cell backward: zero upstream and a hand-derived single unit") {
  Rng rng(5);
  const auto p = random_gru<double>(3, 2, rng);
  GruCellCache<double> cache;
  gru_cell_forward(column({0.3, -0.4}), column({0.1, 0.2, -0.3}), p, &cache);
  auto grad = GruParams<double>::zeros(3, 2);
  Matrix dx;
  const Matrix dh_prev = gru_cell_backward(Matrix(Matrix::Zero(3, 1)), cache, p, grad, &dx);
  CHECK(dh_prev.isZero(0.0));
  CHECK(dx.isZero(0.0));
  grad.visit_blocks([](std::string_view, Matrix& m) { CHECK(m.isZero(0.0)); });

  // d = x = 1 with fixed numbers; chain rule written out by hand.
  GruParams<double> q = GruParams<double>::zeros(1, 1);
  const double wz = 0.4, uz = -0.3, bz = 0.1, wr = -0.6, ur = 0.8, br = 0.05, wh = 0.9,
               uh = -0.5, bh = -0.2, x = 0.7, h = -0.35;
  q.w_z(0, 0) = wz, q.u_z(0, 0) = uz, q.b_z(0, 0) = bz;
  q.w_r(0, 0) = wr, q.u_r(0, 0) = ur, q.b_r(0, 0) = br;
  q.w_h(0, 0) = wh, q.u_h(0, 0) = uh, q.b_h(0, 0) = bh;
  const double z = sig(wz * x + uz * h + bz);
  const double r = sig(wr * x + ur * h + br);
  const double c = std::tanh(wh * x + uh * r * h + bh);
  const double gz = (c - h) * z * (1 - z);
  const double gh = z * (1 - c * c);
  const double grh = uh * gh;
  const double gr = grh * h * r * (1 - r);

  GruCellCache<double> cc;
  gru_cell_forward(column({x}), column({h}), q, &cc);
  auto g = GruParams<double>::zeros(1, 1);
  Matrix gx;
  const Matrix gprev = gru_cell_backward(column({1.0}), cc, q, g, &gx);
  CHECK(g.w_z(0, 0) == doctest::Approx(gz * x).epsilon(1e-10));
  CHECK(g.u_z(0, 0) == doctest::Approx(gz * h).epsilon(1e-10));
  CHECK(g.b_z(0, 0) == doctest::Approx(gz).epsilon(1e-10));
  CHECK(g.w_r(0, 0) == doctest::Approx(gr * x).epsilon(1e-10));
  CHECK(g.u_r(0, 0) == doctest::Approx(gr * h).epsilon(1e-10));
  CHECK(g.b_r(0, 0) == doctest::Approx(gr).epsilon(1e-10));
  CHECK(g.w_h(0, 0) == doctest::Approx(gh * x).epsilon(1e-10));
  CHECK(g.u_h(0, 0) == doctest::Approx(gh * r * h).epsilon(1e-10));
  CHECK(g.b_h(0, 0) == doctest::Approx(gh).epsilon(1e-10));
  CHECK(gx(0, 0) == doctest::Approx(wz * gz + wr * gr + wh * gh).epsilon(1e-10));
  CHECK(gprev(0, 0) == doctest::Approx((1 - z) + uz * gz + ur * gr + grh * r).epsilon(1e-10));
}

TEST_CASE("gru cell backward matches finite differences") {
  Rng rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    auto p = random_gru<LD>(3, 2, rng);
    const MatrixX<LD> x = random_mat<LD>(2, 1, rng);
    const MatrixX<LD> h = random_mat<LD>(3, 1, rng);
    const MatrixX<LD> c = random_mat<LD>(3, 1, rng);  // loss = c . h'
    GruCellCache<LD> cache;
    gru_cell_forward(x, h, p, &cache);
    auto grad = GruParams<LD>::zeros(3, 2);
    gru_cell_backward<LD>(c, cache, p, grad);
    const VectorX<LD> analytic = flatten(grad);
    const std::function<LD(const VectorX<LD>&)> f = [&](const VectorX<LD>& v) {
      auto q = p;
      unflatten(v, q);
      return (c.transpose() * gru_cell_forward(x, h, q))(0, 0);
    };
    const VectorX<LD> numeric = finite_diff_gradient<LD>(f, flatten(p), LD(1e-6));
    for (Index k = 0; k < analytic.size(); ++k) {
      const LD denom = std::max({std::abs(analytic[k]), std::abs(numeric[k]), LD(1e-8)});
      CHECK(static_cast<double>(std::abs(analytic[k] - numeric[k]) / denom) < 1e-6);
    }
  }
}

TEST_CASE("gru sequence equals a manual unroll") {
  Rng rng(17);
  const auto p = random_gru<double>(4, 3, rng);
  std::vector<Matrix> inputs;
  for (int t = 0; t < 3; ++t) inputs.push_back(random_mat<double>(3, 2, rng));
  const Matrix h = gru_sequence_forward(inputs, p);
  for (Index b = 0; b < 2; ++b) {
    std::vector<double> state(4, 0.0);
    for (int t = 0; t < 3; ++t) state = reference_cell(as_vec(Matrix(inputs[t].col(b))), state, p);
    for (Index j = 0; j < 4; ++j) CHECK(std::abs(h(j, b) - state[j]) < 1e-14);
  }
  // a single step reduces to one cell call
  const std::vector<Matrix> one{inputs[0]};
  const Matrix cell = gru_cell_forward(inputs[0], Matrix(Matrix::Zero(4, 2)), p);
  CHECK((gru_sequence_forward(one, p) - cell).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(gru_sequence_forward(inputs, GruParams<double>::zeros(4, 3)).isZero(0.0));
}

TEST_CASE("static encoders and fusion") {
  Rng rng(23);
  using Layers = std::array<std::optional<DenseLayer<double>>, 3>;
  std::array<Matrix, 3> rows;
  for (auto& r : rows) r = random_mat<double>(4, 1, rng).cwiseAbs();

  Layers zero{DenseLayer<double>::zeros(5, 4), DenseLayer<double>::zeros(5, 4), DenseLayer<double>::zeros(5, 4)};
  for (const auto& s : encode_static(rows, zero)) CHECK(s.isZero(0.0));

  Layers neg = zero;
  for (auto& l : neg) l->b.setConstant(-1.0);
  for (const auto& s : encode_static(rows, neg)) CHECK(s.isZero(0.0));

  Layers rnd;
  for (auto& l : rnd) l = DenseLayer<double>{random_mat<double>(5, 4, rng), random_mat<double>(5, 1, rng)};
  const auto enc = encode_static(rows, rnd);
  for (int f = 0; f < 3; ++f) {
    for (Index j = 0; j < 5; ++j) {
      double a = rnd[f]->b(j, 0);
      for (Index k = 0; k < 4; ++k) a += rnd[f]->w(j, k) * rows[f](k, 0);
      CHECK(enc[f](j, 0) == doctest::Approx(std::max(0.0, a)).epsilon(1e-14));
    }
  }

  const Matrix h = random_mat<double>(5, 1, rng);
  const DenseLayer<double> fz = DenseLayer<double>::zeros(5, 20);
  CHECK(fuse<double>(Matrix(Matrix::Zero(5, 1)), {Matrix(Matrix::Zero(5, 1)), Matrix(Matrix::Zero(5, 1)), Matrix(Matrix::Zero(5, 1))}, fz).isZero(0.0));

  const DenseLayer<double> fl{random_mat<double>(5, 20, rng), random_mat<double>(5, 1, rng)};
  const Matrix u = fuse<double>(h, enc, fl);
  std::vector<double> concat = as_vec(h);
  for (const auto& s : enc) {
    const auto v = as_vec(s);
    concat.insert(concat.end(), v.begin(), v.end());
  }
  for (Index j = 0; j < 5; ++j) {
    double a = fl.b(j, 0);
    for (Index k = 0; k < 20; ++k) a += fl.w(j, k) * concat[k];
    CHECK(u(j, 0) == doctest::Approx(std::max(0.0, a)).epsilon(1e-13));
  }
  // the concatenation order is part of the contract
  const Matrix swapped = fuse<double>(enc[0], {h, enc[1], enc[2]}, fl);
  CHECK((swapped - u).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("decoder examples and manual recursion") {
  Rng rng(31);
  const auto zero_cell = GruParams<double>::zeros(4, 1);
  const auto zero_head = DenseLayer<double>::zeros(1, 4);
  const Matrix preds = decode<double>(random_mat<double>(4, 3, rng), Matrix(Matrix::Ones(1, 3)), 5, zero_cell, zero_head);
  CHECK((preds.array() == 0.5).all());
  CHECK_THROWS_AS(decode<double>(Matrix(Matrix::Zero(4, 1)), Matrix(Matrix::Zero(1, 1)), 0, zero_cell, zero_head), ShapeError);

  const auto cell = random_gru<double>(4, 1, rng);
  const DenseLayer<double> head{random_mat<double>(1, 4, rng), random_mat<double>(1, 1, rng)};
  const Matrix u = random_mat<double>(4, 1, rng);
  const Matrix out = decode<double>(u, column({1.0}), 3, cell, head);
  std::vector<double> g = as_vec(u);
  double a = 1.0;
  for (int t = 0; t < 3; ++t) {
    g = reference_cell({a}, g, cell);
    double logit = head.b(0, 0);
    for (int j = 0; j < 4; ++j) logit += head.w(0, j) * g[j];
    a = sig(logit);
    CHECK(std::abs(out(t, 0) - a) < 1e-14);
  }

  // o = 1 is one cell step and the head
  const Matrix single = decode<double>(u, column({0.0}), 1, cell, head);
  const Matrix g1 = gru_cell_forward(column({0.0}), u, cell);
  CHECK(single(0, 0) == doctest::Approx(sig((head.w * g1)(0, 0) + head.b(0, 0))).epsilon(1e-15));

  // the second step consumes the first prediction: feeding a different value changes y_2
  const std::vector<double> g_1 = reference_cell({1.0}, as_vec(u), cell);
  double logit = head.b(0, 0);
  for (int j = 0; j < 4; ++j) logit += head.w(0, j) * reference_cell({0.0}, g_1, cell)[j];
  CHECK(std::abs(sig(logit) - out(1, 0)) > 1e-9);
}

TEST_CASE("dfds forward: zero params, determinism, composition") {
  Rng rng(41);
  const DfdsConfig cfg = tiny_config(4, 3, 3);
  const auto profiles = random_profiles(rng, {"a", "b"});
  const std::vector<data::Window> windows{make_window("a", 50, {1, 0, 1}, {1, 1, 0}),
                                          make_window("b", 700, {0, 0, 1}, {0, 1, 0}),
                                          make_window("zz", 13, {0, 1, 1}, {1, 0, 0})};
  const auto wp = ptrs(windows);

  const DfdsModel<double> zero{cfg, DfdsParams<double>::zeros(cfg)};
  CHECK((zero.predict(wp, profiles).array() == 0.5).all());

  const auto m = random_dfds<double>(cfg, rng);
  const Matrix p1 = m.predict(wp, profiles);
  const Matrix p2 = m.predict(wp, profiles);
  CHECK(std::memcmp(p1.data(), p2.data(), sizeof(double) * p1.size()) == 0);
  CHECK((p1.array() > 0.0).all());
  CHECK((p1.array() < 1.0).all());

  // composition of the sub-operations, one window at a time
  for (std::size_t b = 0; b < windows.size(); ++b) {
    const auto& w = windows[b];
    std::vector<Matrix> inputs;
    for (int t = 0; t < 3; ++t) {
      const auto f = features::encode_dynamic(w.input_occ[t], w.input_slot(t));
      inputs.push_back(Eigen::Map<const Matrix>(f.data(), 36, 1));
    }
    const Matrix h = gru_sequence_forward(inputs, *m.params.encoder);
    const auto rows = features::static_rows_for_window(profiles, w);
    std::array<Matrix, 3> r;
    for (int f = 0; f < 3; ++f) r[f] = Eigen::Map<const Matrix>(rows.rows[f].data(), 3, 1);
    const Matrix u = fuse<double>(h, encode_static(r, m.params.static_enc), m.params.fusion);
    const Matrix y = decode<double>(u, column({double(w.input_occ[2])}), 3, m.params.decoder, m.params.head);
    for (int t = 0; t < 3; ++t) CHECK(std::abs(y(t, 0) - p1(t, static_cast<Index>(b))) < 1e-14);
  }
}

TEST_CASE("bce loss examples") {
  CHECK(bce_loss(std::vector<double>{0.5}, std::vector<std::uint8_t>{1}) == doctest::Approx(0.693147).epsilon(1e-6));
  CHECK(bce_loss(std::vector<double>{1.0, 0.0}, std::vector<std::uint8_t>{1, 0}) < 1e-6);
  CHECK(bce_loss(std::vector<double>{0.9, 0.1}, std::vector<std::uint8_t>{1, 0}) == doctest::Approx(0.105361).epsilon(1e-6));
  CHECK_THROWS_AS(bce_loss(std::vector<double>{0.5}, std::vector<std::uint8_t>{1, 0}), ShapeError);

  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> p(5);
    std::vector<std::uint8_t> y(5);
    for (int k = 0; k < 5; ++k) {
      y[k] = static_cast<std::uint8_t>(rng.below(2));
      p[k] = rng.uniform();
    }
    CHECK(bce_loss(p, y) >= 0.0);
    // moving predictions toward the targets lowers the loss
    std::vector<double> closer(5);
    for (int k = 0; k < 5; ++k) closer[k] = 0.5 * (p[k] + y[k]);
    CHECK(bce_loss(closer, y) <= bce_loss(p, y));
  }
  // the batched form agrees with the per-window mean
  Matrix preds(2, 1), targets(2, 1);
  preds << 0.9, 0.1;
  targets << 1, 0;
  CHECK(bce_sum(preds, targets) == doctest::Approx(0.105361).epsilon(1e-6));
  // clamped predictions carry no gradient
  preds << 1.0 - 1e-9, 1e-9;
  CHECK(bce_grad<double>(preds, targets, 1.0).isZero(0.0));
}

TEST_CASE("dfds backward matches finite differences on tiny models") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    for (const auto& [d, i, o] : {std::tuple{3, 2, 2}, std::tuple{4, 3, 3}}) {
      const DfdsConfig cfg = tiny_config(d, i, o);
      const auto profiles = random_profiles(rng, {"a"});
      std::vector<data::Window> windows;
      for (int k = 0; k < 2; ++k) {
        std::vector<std::uint8_t> in(i), out(o);
        for (auto& v : in) v = static_cast<std::uint8_t>(rng.below(2));
        for (auto& v : out) v = static_cast<std::uint8_t>(rng.below(2));
        windows.push_back(make_window("a", static_cast<std::int64_t>(rng.below(600)), in, out));
      }
      const auto model = random_dfds<LD>(cfg, rng);
      const auto report = training::gradient_check(model, ptrs(windows), profiles, 1e-4);
      INFO("seed " << seed << " worst " << report.worst_coordinate << " err " << report.max_rel_err);
      CHECK(report.pass);
    }
  }
}

TEST_CASE("zero static rows leave their encoder weights without gradient") {
  Rng rng(8);
  const DfdsConfig cfg = tiny_config(4, 3, 3);
  // an always-free station: every profile row is exactly zero
  const std::vector<data::StationSeries> train{{"a", TimeSlot::from_timestamp(1596412800), std::vector<std::uint8_t>(300, 0)}};
  const auto profiles = features::build_static_profiles(train);
  const std::vector<data::Window> windows{make_window("a", 10, {0, 0, 0}, {0, 1, 0})};
  auto m = DfdsModel<double>::initialized(cfg, rng);
  auto grad = m.zero_like();
  m.loss_and_gradient(ptrs(windows), profiles, grad, 1.0);
  for (const auto& s : grad.static_enc) CHECK(s->w.isZero(0.0));
}

TEST_CASE("batched forward equals per-window forward") {
  Rng rng(55);
  DfdsConfig cfg = tiny_config(6, 8, 5);
  const auto profiles = random_profiles(rng, {"a", "b"});
  std::vector<data::Window> windows;
  for (int k = 0; k < 7; ++k) {
    std::vector<std::uint8_t> in(8), out(5);
    for (auto& v : in) v = static_cast<std::uint8_t>(rng.below(2));
    for (auto& v : out) v = static_cast<std::uint8_t>(rng.below(2));
    windows.push_back(make_window(k % 2 ? "a" : "b", static_cast<std::int64_t>(rng.below(2000)), in, out));
  }
  const auto m = random_dfds<double>(cfg, rng);
  const Matrix all = m.predict(ptrs(windows), profiles);
  for (std::size_t b = 0; b < windows.size(); ++b) {
    const std::vector<const data::Window*> one{&windows[b]};
    const Matrix single = m.predict(one, profiles);
    CHECK((single.col(0) - all.col(static_cast<Index>(b))).cwiseAbs().maxCoeff() < 1e-13);
  }
  const auto wrong = make_window("a", 0, {0, 1}, {0, 1, 0, 0, 0});
  const std::vector<const data::Window*> bad{&wrong};
  CHECK_THROWS_AS(m.predict(bad, profiles), ShapeError);
}

TEST_CASE("ablation configurations reshape the network") {
  const DfdsConfig base;
  CHECK(base.dynamic_dim() == 36);
  CHECK(base.fusion_width() == 400);
  const auto with = [&](Ablation a) { return DfdsConfig::with_ablation(base, a); };
  CHECK(with(Ablation::drop_dynamic_component).fusion_width() == 300);
  CHECK(with(Ablation::drop_static_component).fusion_width() == 100);
  CHECK(with(Ablation::drop_mean).fusion_width() == 300);
  CHECK(with(Ablation::drop_occupation).dynamic_dim() == 35);
  CHECK(with(Ablation::drop_day_of_week).dynamic_dim() == 29);
  CHECK(with(Ablation::drop_time_of_day).dynamic_dim() == 8);

  const auto p = DfdsParams<double>::zeros(with(Ablation::drop_q25));
  CHECK(!p.static_enc[1].has_value());
  CHECK(p.fusion.w.cols() == 300);
  CHECK(!DfdsParams<double>::zeros(with(Ablation::drop_dynamic_component)).encoder.has_value());

  for (Ablation a : kAllAblations) CHECK(parse_ablation(to_string(a)) == a);
  CHECK(parse_ablation("full") == Ablation::none);
  CHECK_THROWS_AS(parse_ablation("drop_everything"), UsageError);

  DfdsConfig bad = base;
  bad.d_fusion = 50;
  CHECK_THROWS_AS(bad.validate(), ShapeError);
}

TEST_CASE("glorot init leaves biases at zero and is seed-deterministic") {
  const DfdsConfig cfg = tiny_config(5, 4, 3);
  Rng a(7), b(7);
  auto pa = DfdsParams<double>::glorot(cfg, a);
  auto pb = DfdsParams<double>::glorot(cfg, b);
  CHECK(flatten(pa) == flatten(pb));
  pa.visit_blocks([](std::string_view name, Matrix& m) {
    const bool bias = name.back() == 'b' || name.find("/b_") != std::string_view::npos;
    if (bias) {
      CHECK(m.isZero(0.0));
    } else {
      CHECK(!m.isZero(0.0));
      CHECK(m.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / double(m.rows() + m.cols())));
    }
  });
}
