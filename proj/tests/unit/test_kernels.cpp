#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "metaflow/kernels.hpp"

using namespace metaflow::kernels;

namespace {

std::vector<float> random_vec(std::mt19937& rng, std::size_t n) {
  std::normal_distribution<float> d(0.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

std::vector<const KernelTable*> variants() {
  std::vector<const KernelTable*> out;
  if (auto* t = avx2_table()) out.push_back(t);
  if (auto* t = neon_table()) out.push_back(t);
  return out;
}

// Lengths around the vector widths and their tails.
const std::size_t kLengths[] = {0, 1, 3, 7, 8, 9, 15, 16, 17, 31, 32, 33, 63, 64, 100, 257, 1000, 4099};

}  // namespace

TEST_CASE("active table is one of the available variants") {
  const auto& t = active();
  CHECK((&t == &scalar_table() || &t == avx2_table() || &t == neon_table()));
  CHECK(scalar_table().isa == Isa::Scalar);
  CHECK(to_string(Isa::Avx2) == "avx2");
}

TEST_CASE("scalar reference") {
  const float a[] = {1, 2, 3}, b[] = {4, 5, 6};
  CHECK(scalar_table().dot(a, b, 3) == 32.0f);
  float y[] = {1, 1, 1};
  scalar_table().axpy(2.0f, a, y, 3);
  CHECK(y[2] == 7.0f);
  scalar_table().scale(0.5f, y, 3);
  CHECK(y[0] == 1.5f);

  float p = 1.0f, g = 0.5f, m = 0.0f, v = 0.0f;
  scalar_table().adam(&p, &g, &m, &v, 1, 0.1f, 0.9f, 0.999f, 1e-8f, 0.1f, 0.001f);
  CHECK(m == doctest::Approx(0.05));
  CHECK(v == doctest::Approx(0.00025));
  // First step moves by lr * sign(g).
  CHECK(p == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("SIMD variants match the scalar reference") {
  if (variants().empty()) MESSAGE("no SIMD variant available on this CPU");
  std::mt19937 rng(3);
  const auto& ref = scalar_table();
  for (const auto* t : variants()) {
    CAPTURE(to_string(t->isa));
    for (std::size_t n : kLengths) {
      CAPTURE(n);
      auto a = random_vec(rng, n), b = random_vec(rng, n);

      const double exact = [&] {
        double s = 0;
        for (std::size_t i = 0; i < n; ++i) s += double(a[i]) * b[i];
        return s;
      }();
      double mag = 0;
      for (std::size_t i = 0; i < n; ++i) mag += std::abs(double(a[i]) * b[i]);
      const double tol = 1e-6 * (mag + 1.0);
      CHECK(std::abs(t->dot(a.data(), b.data(), n) - exact) <= tol);
      CHECK(std::abs(ref.dot(a.data(), b.data(), n) - exact) <= tol);

      // Element-wise kernels have no reduction and must agree bit for bit
      // unless FMA contracts the rounding; allow one ulp-ish slack.
      auto y1 = b, y2 = b;
      ref.axpy(0.37f, a.data(), y1.data(), n);
      t->axpy(0.37f, a.data(), y2.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(y2[i] == doctest::Approx(y1[i]).epsilon(1e-6).scale(1.0));

      y1 = b;
      y2 = b;
      ref.scale(-1.25f, y1.data(), n);
      t->scale(-1.25f, y2.data(), n);
      CHECK(y1 == y2);

      auto p1 = a, p2 = a, g = b;
      std::vector<float> m1(n, 0.01f), m2 = m1, v1(n, 0.02f), v2 = v1;
      for (int step = 1; step <= 3; ++step) {
        const float c1 = 1.0f - std::pow(0.9f, float(step)), c2 = 1.0f - std::pow(0.999f, float(step));
        ref.adam(p1.data(), g.data(), m1.data(), v1.data(), n, 1e-3f, 0.9f, 0.999f, 1e-8f, c1, c2);
        t->adam(p2.data(), g.data(), m2.data(), v2.data(), n, 1e-3f, 0.9f, 0.999f, 1e-8f, c1, c2);
      }
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(p2[i] == doctest::Approx(p1[i]).epsilon(1e-6).scale(1.0));
        CHECK(m2[i] == doctest::Approx(m1[i]).epsilon(1e-6).scale(1.0));
        CHECK(v2[i] == doctest::Approx(v1[i]).epsilon(1e-6).scale(1.0));
      }
    }
  }
}

TEST_CASE("unaligned pointers") {
  std::mt19937 rng(4);
  auto a = random_vec(rng, 101), b = random_vec(rng, 101);
  for (const auto* t : variants())
    for (std::size_t off = 1; off < 8; ++off)
      CHECK(t->dot(a.data() + off, b.data() + off, 90) ==
            doctest::Approx(scalar_table().dot(a.data() + off, b.data() + off, 90)).epsilon(1e-5));
}

TEST_CASE("double front ends") {
  const double a[] = {1.5, -2.0}, b[] = {2.0, 0.25};
  CHECK(dot(a, b, 2) == 2.5);
  double y[] = {0.0, 1.0};
  axpy(2.0, a, y, 2);
  CHECK(y[1] == -3.0);
}
