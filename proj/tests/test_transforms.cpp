#include "isolattice/transforms.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace isolattice;

namespace {

const Signature kSig = Signature::conformal3();

struct CmcSetup {
  ParametrizedSurface surface;
  double H;
  ConnectionFamily family;
  PolyConservedQuantity p;
};

CmcSetup inward_cylinder() {
  ParametrizedSurface s = make_cylinder(1.0, -1);
  const EtaCalibration cal = calibrate_eta_scale(s, 0.5);
  return {s, 0.5, ConnectionFamily(retraction_form(s, cal.scale)), cmc_linear_cq(s, 0.5, SpaceFormVector::euclidean())};
}

SampleGrid grid20(const Domain& d) { return {{d.u0 + 0.1, d.u1 - 0.1, d.v0 + 0.1, d.v1 - 0.1}, 20, 20}; }

}  // namespace

TEST(CmcLinearCq, CylinderMeanCurvature) {
  const CmcSetup c = inward_cylinder();
  const Eigen::VectorXd q = SpaceFormVector::euclidean().q_vec.coords();
  SplitRng rng(21);
  for (int k = 0; k < 50; ++k) {
    const double u = -2.5 + 5 * rng.uniform(), v = -1.5 + 3 * rng.uniform();
    const Eigen::VectorXd y = c.p.coefficient(1)(u, v);
    const Eigen::VectorXd sigma = lift_coords(c.surface.position(u, v));
    EXPECT_NEAR(detail::inner(kSig, q, y), -0.5, 1e-10);
    EXPECT_NEAR(detail::inner(kSig, y, y), 1.0, 1e-10);
    EXPECT_NEAR(detail::inner(kSig, y, sigma), 0.0, 1e-10);
    EXPECT_EQ((c.p.coefficient(0)(u, v) - q).norm(), 0.0);
  }
}

TEST(CmcLinearCq, ConservedOnGrid) {
  const CmcSetup c = inward_cylinder();
  EXPECT_LT(check_conserved(c.p, c.family, grid20(c.surface.domain())), 1e-6);
}

TEST(CmcLinearCq, Errors) {
  try {
    cmc_linear_cq(make_catenoid(), 0.5, SpaceFormVector::euclidean());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonCmc);
  }
  EXPECT_THROW(cmc_linear_cq(make_cylinder(), 0.5, SpaceFormVector(PseudoVector::e0(kSig))), Error);
}

TEST(EtaCalibration, KnownScales) {
  EXPECT_EQ(calibrate_eta_scale(make_cylinder(1.0, -1), 0.5).scale, -0.5);
  EXPECT_EQ(calibrate_eta_scale(make_cylinder(1.0, 1), -0.5).scale, 0.5);
  const EtaCalibration cat = calibrate_eta_scale(make_catenoid(), 0.0);
  EXPECT_EQ(std::abs(cat.scale), 1.0);
  EXPECT_TRUE(cat.from_candidates);
}

TEST(EtaCalibration, FallsBackToLeastSquares) {
  const EtaCalibration cal = calibrate_eta_scale(make_cylinder(3.0, 1), -1.0 / 6.0);
  EXPECT_FALSE(cal.from_candidates);
  EXPECT_LT(cal.residual, 1e-6);
}

TEST(CheckConserved, ConstantQIsNotConserved) {
  const CmcSetup c = inward_cylinder();
  const PolyConservedQuantity q(kSig, {[](double, double) { return SpaceFormVector::euclidean().q_vec.coords(); }});
  EXPECT_GT(check_conserved(q, c.family, grid20(c.surface.domain())), 1e-2);
}

TEST(CheckConserved, ZeroQuantity) {
  const CmcSetup c = inward_cylinder();
  const PolyConservedQuantity z(kSig, {[](double, double) { return Eigen::VectorXd::Zero(5).eval(); }});
  EXPECT_EQ(check_conserved(z, c.family, grid20(c.surface.domain())), 0.0);
}

TEST(Darboux, PathIndependentAndNull) {
  const CmcSetup c = inward_cylinder();
  const Param x0{0.0, 0.0};
  const DarbouxTransform d = darboux_transform(c.family, 1.3, euclidean_lift({2, 1, 0.5}), x0);
  for (Param x : {Param{0.8, 0.6}, Param{-1.2, 0.9}, Param{1.5, -1.0}}) {
    const NullLine a = d.at(x);
    const NullLine b = d.along({x0, {x0.u, x.v}, x});
    EXPECT_LT(projective_distance(a, b), 1e-7);
    EXPECT_LT(std::abs(inner(a.rep(), a.rep())), 1e-9);
  }
}

TEST(Darboux, InitialLineMatters) {
  const CmcSetup c = inward_cylinder();
  const DarbouxTransform d1 = darboux_transform(c.family, 1.3, euclidean_lift({2, 1, 0.5}), {0, 0});
  const DarbouxTransform d2 = darboux_transform(c.family, 1.3, euclidean_lift({2, -1, 0.5}), {0, 0});
  EXPECT_GT(projective_distance(d1.at({0.5, 0.5}), d2.at({0.5, 0.5})), 1e-3);
}

TEST(Darboux, Errors) {
  const CmcSetup c = inward_cylinder();
  try {
    darboux_transform(c.family, 0.0, euclidean_lift({2, 1, 0}), {0, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ZeroLambda);
  }
  try {
    darboux_transform(c.family, 1.0, euclidean_lift(c.surface.position(0, 0)), {0, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::OrthogonalLines);
  }
  try {
    darboux_transform(c.family, 1.0, euclidean_lift({2, 1, 0}), {9, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::PathOutsideDomain);
  }
}

TEST(Backlund, SampledLinesAreOrthogonal) {
  const CmcSetup c = inward_cylinder();
  for (double mu : {1.6, -0.7, 2.4}) {
    const AdmissibleLines adm = backlund_initial_lines(c.p, c.surface, mu, {0, 0});
    SplitRng rng(31);
    for (int k = 0; k < 20; ++k) EXPECT_LT(adm.orthogonality_residual(adm.sample(rng)), 1e-12);
  }
}

TEST(Backlund, OrthogonalityPropagatesAndCmcIsPreserved) {
  const CmcSetup c = inward_cylinder();
  const double mu = 1.6;
  const Param x0{0.0, 0.0};
  const AdmissibleLines adm = backlund_initial_lines(c.p, c.surface, mu, x0);
  const DarbouxTransform d = darboux_transform(c.family, mu, adm.sample_well_conditioned(5), x0);
  const PolyConservedQuantity phat = transform_cq(c.p, d);
  const Eigen::VectorXd q = SpaceFormVector::euclidean().q_vec.coords();
  for (Param x : {Param{1.0, 1.0}, Param{-1.5, 0.8}, Param{2.0, -1.5}}) {
    const NullLine f = d.at(x);
    const Eigen::VectorXd pm = c.p.evaluate(mu, x.u, x.v);
    EXPECT_LT(std::abs(detail::inner(kSig, pm, f.coords())) / pm.norm(), 1e-7);
    const PolyFit fit = gauge_conserved_quantity(kSig, c.p.at(x.u, x.v), lift_coords(c.surface.position(x.u, x.v)),
                                                 f.coords(), mu);
    EXPECT_LT(fit.residual, 1e-7);
    EXPECT_LE(fit.poly.effective_degree(), 1);
    const Polynomial ph = phat.at(x.u, x.v);
    EXPECT_LT((ph.coeffs[0] - q).norm(), 1e-12);
    EXPECT_NEAR(-detail::inner(kSig, q, ph.coeffs[1]), 0.5, 1e-6);
    EXPECT_NEAR(detail::inner(kSig, ph.coeffs[1], ph.coeffs[1]), 1.0, 1e-6);
  }
}

TEST(Backlund, TransformedQuantityAtZeroIsUnchanged) {
  const CmcSetup c = inward_cylinder();
  const AdmissibleLines adm = backlund_initial_lines(c.p, c.surface, 1.6, {0, 0});
  const DarbouxTransform d = darboux_transform(c.family, 1.6, adm.sample(9), {0, 0});
  const PolyConservedQuantity phat = transform_cq(c.p, d);
  EXPECT_LT((phat.evaluate(0.0, 0.3, 0.2) - c.p.evaluate(0.0, 0.3, 0.2)).norm(), 1e-12);
}

TEST(Backlund, GenericLineIsNotPolynomial) {
  const CmcSetup c = inward_cylinder();
  const DarbouxTransform d = darboux_transform(c.family, 1.6, euclidean_lift({2, 1, 0.5}), {0, 0});
  try {
    transform_cq(c.p, d).at(0.3, 0.2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonPolynomial);
  }
}

TEST(Backlund, EmptyAdmissibleSet) {
  const CmcSetup c = inward_cylinder();
  try {
    backlund_initial_lines(c.p, c.surface, 0.8, {0, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyAdmissibleSet);
  }
}

TEST(Backlund, NullSpectralValueGivesSingleton) {
  const CmcSetup c = inward_cylinder();
  const AdmissibleLines adm = backlund_initial_lines(c.p, c.surface, 1.0, {0, 0});
  EXPECT_TRUE(adm.singleton());
  EXPECT_LT(adm.orthogonality_residual(adm.sample(1)), 1e-12);
}

// Null lines of R^{4,1} are spanned by (x, 1) with x on the unit 3-sphere.
// A grid search over the sphere decides whether p^perp meets the light cone.
TEST(Backlund, AdmissibleSetMatchesSphereSearch) {
  const CmcSetup c = inward_cylinder();
  const double pi = std::numbers::pi;
  const int n = 48;
  for (double mu : {-1.5, -0.3, 0.2, 0.5, 0.8, 0.95, 1.05, 1.4, 3.0}) {
    const Eigen::VectorXd p = c.p.evaluate(mu, 0.0, 0.0);
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= n; ++i) {
      for (int j = 0; j <= n; ++j) {
        for (int k = 0; k < 2 * n; ++k) {
          const double a = pi * i / n, b = pi * j / n, g = pi * k / n;
          const Eigen::Vector4d x(std::cos(a), std::sin(a) * std::cos(b), std::sin(a) * std::sin(b) * std::cos(g),
                                  std::sin(a) * std::sin(b) * std::sin(g));
          best = std::min(best, std::abs(p.head<4>().dot(x) - p[4]) / p.norm());
        }
      }
    }
    const double pp = detail::inner(kSig, p, p);
    bool empty = false;
    try {
      backlund_initial_lines(c.p, c.surface, mu, {0, 0});
    } catch (const Error& e) {
      empty = e.kind() == ErrorKind::EmptyAdmissibleSet;
    }
    EXPECT_EQ(empty, best > 0.05) << "mu=" << mu << " (p,p)=" << pp << " best=" << best;
  }
}

// Gamma_hat(t) = B(t) . Gamma(t) with B(t) = boost(f, fhat, 1 - t/mu) must
// again be of the form d + t eta_hat with eta_hat in fhat ^ fhat^perp.
TEST(GaugeIdentity, TransformedConnectionIsLinearInT) {
  const CmcSetup c = inward_cylinder();
  const double mu = 1.6;
  const AdmissibleLines adm = backlund_initial_lines(c.p, c.surface, mu, {0, 0});
  const DarbouxTransform d = darboux_transform(c.family, mu, adm.sample_well_conditioned(3), {0, 0});
  const double h = 1e-4;
  auto B = [&](double t, double u, double v) {
    return boost_matrix(euclidean_lift(c.surface.position(u, v)), d.at({u, v}), 1.0 - t / mu);
  };
  auto A = [&](double t, double u, double v, bool along_u) {
    const Eigen::MatrixXd b = B(t, u, v);
    const Eigen::MatrixXd db = along_u ? (B(t, u + h, v) - B(t, u - h, v)) / (2 * h) : (B(t, u, v + h) - B(t, u, v - h)) / (2 * h);
    const Eigen::MatrixXd eta = along_u ? c.family.eta().eta_u_matrix(u, v) : c.family.eta().eta_v_matrix(u, v);
    return Eigen::MatrixXd(b * (t * eta) * b.inverse() - db * b.inverse());
  };
  for (Param x : {Param{0.4, 0.3}, Param{-0.6, 0.5}}) {
    const NullLine fh = d.at(x);
    for (bool along_u : {true, false}) {
      const Eigen::MatrixXd ref = A(0.37, x.u, x.v, along_u) / 0.37;
      EXPECT_LT((ref * fh.coords()).norm(), 1e-6);
      for (double t : {-0.9, 0.8, 2.3}) EXPECT_LT((A(t, x.u, x.v, along_u) / t - ref).norm(), 1e-6 * ref.norm()) << t;
    }
  }
}

TEST(Polynomial, SamplesAvoidPole) {
  for (double mu : {0.25, 0.5, -0.25, 1.0, 0.01}) {
    const std::vector<double> ts = polynomial_samples(mu, 2);
    EXPECT_GE(ts.size(), 5u);
    for (double t : ts) EXPECT_GE(std::abs(t - mu), 0.1 * std::abs(mu) - 1e-15);
  }
}

TEST(Polynomial, FitRecoversCoefficients) {
  Polynomial p;
  p.coeffs = {Eigen::VectorXd::LinSpaced(5, 0, 1), Eigen::VectorXd::LinSpaced(5, 2, -1), Eigen::VectorXd::Constant(5, 0.3)};
  const std::vector<double> ts = polynomial_samples(0.9, 2);
  std::vector<Eigen::VectorXd> vals;
  for (double t : ts) vals.push_back(p(t));
  const PolyFit fit = fit_polynomial(ts, vals, 2);
  EXPECT_LT(fit.residual, 1e-13);
  for (int k = 0; k < 3; ++k) EXPECT_LT((fit.poly.coeffs[k] - p.coeffs[k]).norm(), 1e-12);
}
