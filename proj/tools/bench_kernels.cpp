// Times the serial reference kernels against the OpenMP ones and checks that
// both produce bit-identical output (the parallel loops only split
// independent output elements).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "otreg/kernels.hpp"
#include "otreg/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using otreg::Matrix;
using otreg::Rng;
namespace kernels = otreg::kernels;

namespace {

double now_sec() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

Matrix random_matrix(int rows, int cols, Rng& rng) {
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = rng.symmetric();
  return m;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

template <class Serial, class Parallel>
void bench(const char* name, int reps, Matrix& out_serial, Matrix& out_par, Serial s,
           Parallel p) {
  s(out_serial);  // warm
  double t0 = now_sec();
  for (int r = 0; r < reps; ++r) s(out_serial);
  const double ts = (now_sec() - t0) / reps;

  p(out_par);
  t0 = now_sec();
  for (int r = 0; r < reps; ++r) p(out_par);
  const double tp = (now_sec() - t0) / reps;

  std::printf("%-22s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx   exact-match %s\n",
              name, ts * 1e3, tp * 1e3, ts / tp, bitwise_equal(out_serial, out_par) ? "yes" : "NO");
}

}  // namespace

int main(int argc, char** argv) {
  int reps = 5;
  if (argc > 1) reps = std::atoi(argv[1]);

#ifdef _OPENMP
  std::printf("threads: %d\n", omp_get_max_threads());
#else
  std::printf("threads: 1 (compiled without OpenMP; both columns run the serial code)\n");
#endif

  Rng rng(7);
  const Matrix a = random_matrix(384, 384, rng);
  const Matrix b = random_matrix(384, 384, rng);
  const Matrix wide = random_matrix(512, 2048, rng);
  const Matrix emb_a = random_matrix(1024, 64, rng);
  const Matrix emb_b = random_matrix(512, 64, rng);

  Matrix o1(384, 384), o2(384, 384);
  bench("matmul 384x384", reps, o1, o2, [&](Matrix& o) { kernels::serial::matmul(a, b, o); },
        [&](Matrix& o) { kernels::par::matmul(a, b, o); });

  Matrix c1(1024, 512), c2(1024, 512);
  bench("matmul_nt 1024x64x512", reps, c1, c2,
        [&](Matrix& o) { kernels::serial::matmul_nt(emb_a, emb_b, o); },
        [&](Matrix& o) { kernels::par::matmul_nt(emb_a, emb_b, o); });

  Matrix l1(512, 1), l2(512, 1);
  bench("lse_rows 512x2048", reps, l1, l2,
        [&](Matrix& o) { kernels::serial::lse_rows(wide, o); },
        [&](Matrix& o) { kernels::par::lse_rows(wide, o); });

  Matrix s1(512, 2048), s2(512, 2048);
  bench("softmax_rows 512x2048", reps, s1, s2,
        [&](Matrix& o) { kernels::serial::softmax_rows(wide, o); },
        [&](Matrix& o) { kernels::par::softmax_rows(wide, o); });

  Matrix e1(512, 2048), e2(512, 2048);
  bench("exp map 512x2048", reps, e1, e2,
        [&](Matrix& o) { kernels::serial::map1(wide, o, [](double x) { return std::exp(x); }); },
        [&](Matrix& o) { kernels::par::map1(wide, o, [](double x) { return std::exp(x); }); });

  Matrix n1(1024, 1), n2(1024, 1);
  bench("row_norms 1024x64", reps, n1, n2,
        [&](Matrix& o) { kernels::serial::row_norms(emb_a, o); },
        [&](Matrix& o) { kernels::par::row_norms(emb_a, o); });

  return 0;
}
