// Timing comparison of the serial reference kernels against the
// OpenMP-parallel paths, plus the client-parallel round loop. The outputs
// are checked bitwise while timing, since both paths must agree exactly.

#include <chrono>
#include <cstdio>
#include <functional>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "fedpalm/array.hpp"
#include "fedpalm/data.hpp"
#include "fedpalm/federation.hpp"
#include "fedpalm/gabor.hpp"
#include "fedpalm/rng.hpp"

using namespace fedpalm;

namespace {

double time_of(const std::function<void()>& fn, int reps) {
  // One warmup, then best-of timing.
  fn();
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (dt < best) best = dt;
  }
  return best;
}

void report(const char* name, double serial_s, double parallel_s, bool identical) {
  std::printf("%-28s serial %8.4f s   parallel %8.4f s   speedup %5.2fx   bitwise %s\n", name,
              serial_s, parallel_s, serial_s / parallel_s, identical ? "equal" : "DIFFER");
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("openmp enabled, max threads = %d\n", omp_get_max_threads());
#else
  std::printf("openmp disabled; parallel paths run serially\n");
#endif

  Rng rng(1234);

  {  // matmul
    DenseArray a({384, 384}), b({384, 384});
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(-1, 1);
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = rng.uniform(-1, 1);
    DenseArray out_s, out_p;
    const double ts = time_of([&] { out_s = serial::matmul(a, b); }, 3);
    const double tp = time_of([&] { out_p = matmul(a, b); }, 3);
    report("matmul 384x384", ts, tp, out_s.data() == out_p.data());
  }

  {  // gabor expert over a batch of images
    GaborBankConfig bank;
    Rng init(7);
    const ParamVector params = init_gabor_params(bank, init);
    std::vector<DenseArray> images;
    for (int i = 0; i < 64; ++i) {
      DenseArray img({64, 64});
      for (std::size_t px = 0; px < img.size(); ++px) img[px] = rng.uniform();
      images.push_back(std::move(img));
    }
    std::vector<DenseArray> out_s(images.size()), out_p(images.size());
#ifdef _OPENMP
    const int max_threads = omp_get_max_threads();
    omp_set_num_threads(1);
#endif
    const double ts = time_of(
        [&] {
          for (std::size_t i = 0; i < images.size(); ++i) {
            out_s[i] = expert_forward(bank, params, images[i]);
          }
        },
        2);
#ifdef _OPENMP
    omp_set_num_threads(max_threads);
#endif
    const double tp = time_of(
        [&] {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
          for (long long i = 0; i < static_cast<long long>(images.size()); ++i) {
            out_p[static_cast<std::size_t>(i)] =
                expert_forward(bank, params, images[static_cast<std::size_t>(i)]);
          }
        },
        2);
    bool same = true;
    for (std::size_t i = 0; i < images.size(); ++i) same &= out_s[i].data() == out_p[i].data();
    report("gabor bank, 64 images", ts, tp, same);
  }

  {  // one federated round, sequential vs client-parallel
    SynthConfig synth;
    synth.clients = 4;
    synth.identities_per_client = 4;
    synth.samples_per_identity = 6;
    synth.image_size = 32;
    synth.seed = 5;
    const Dataset ds = generate_synthetic(synth);
    const BenchmarkSplit split = make_benchmark_split(ds, 4, 5);

    FederationConfig cfg;
    cfg.clients = 4;
    cfg.rounds = 3;
    cfg.local_epochs = 1;
    cfg.top_k = 3;
    cfg.seed = 5;
    cfg.bank.filters = 4;
    cfg.bank.kernel_size = 7;
    cfg.bank.pool_grid = 3;
    cfg.hidden = 32;
    cfg.embed_dim = 16;

    FederationConfig seq = cfg;
    seq.parallel_clients = false;
    FederationResult r_seq, r_par;
#ifdef _OPENMP
    const int max_threads = omp_get_max_threads();
    omp_set_num_threads(1);
#endif
    const double ts = time_of([&] { r_seq = run_federation(seq, split); }, 1);
#ifdef _OPENMP
    omp_set_num_threads(max_threads);
#endif
    const double tp = time_of([&] { r_par = run_federation(cfg, split); }, 1);
    const bool same = r_seq.global_model.expert.data() == r_par.global_model.expert.data() &&
                      r_seq.global_model.embedding.data() == r_par.global_model.embedding.data() &&
                      r_seq.round_log.to_csv() == r_par.round_log.to_csv();
    report("federated run, 4 clients", ts, tp, same);
  }
  return 0;
}
