// Acceptance gate: every release-blocking numerical guarantee, one line each.
// Exit status is nonzero if any criterion fails or exceeds its time budget.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "perfsim/experiments.hpp"
#include "perfsim/loss.hpp"
#include "perfsim/oracle.hpp"
#include "perfsim/rng.hpp"
#include "perfsim/shift_model.hpp"

using namespace perfsim;

namespace {

struct Outcome {
    bool pass = true;
    std::string why;
};

int g_failures = 0;

void run_criterion(int index, const std::string& label, double budget_sec,
                   const std::function<Outcome()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
        out = body();
    } catch (const std::exception& e) {
        out.pass = false;
        out.why = std::string("exception: ") + e.what();
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    if (out.pass && budget_sec > 0.0 && elapsed > budget_sec) {
        out.pass = false;
        char buf[128];
        std::snprintf(buf, sizeof(buf),
                      "runtime budget exceeded (%.1fs > %.0fs)", elapsed,
                      budget_sec);
        out.why = buf;
    }
    std::printf("[%s] criterion %d: %s (%.1fs)%s%s\n",
                out.pass ? "PASS" : "FAIL", index, label.c_str(), elapsed,
                out.why.empty() ? "" : " -- ", out.why.c_str());
    std::fflush(stdout);
    if (!out.pass) {
        ++g_failures;
    }
}

Outcome from_result(const TheoremCheckResult& res) {
    Outcome out;
    if (res.skipped) {
        out.pass = false;
        out.why = "unexpectedly skipped: " + res.note;
        return out;
    }
    if (!res.pass) {
        out.pass = false;
        for (const auto& d : res.details) {
            if (!d.pass && d.binding) {
                char buf[256];
                std::snprintf(buf, sizeof(buf),
                              "%s: predicted %.6g observed %.6g tol %.3g",
                              d.label.c_str(), d.predicted, d.observed,
                              d.tolerance);
                out.why = buf;
                break;
            }
        }
    }
    return out;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cmd(const std::string& args) {
    const std::string cmd =
        std::string(PERFSIM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

int main() {
    run_criterion(1, "risk gap identity and its closed-form battery", 10.0,
                  [] {
                      ExperimentSpec spec;
                      spec.name = "gap-identity";
                      return from_result(run_experiment(spec));
                  });

    run_criterion(
        2, "retraining fixed point minimizes the risk under mean shifts", 60.0,
        [] {
            ExperimentSpec spec;
            spec.name = "fixed-point";
            return from_result(run_experiment(spec));
        });

    run_criterion(3, "noisy retraining error curve and plateau", 120.0, [] {
        ExperimentSpec spec;
        spec.name = "rerm-mse";
        return from_result(run_experiment(spec));
    });

    run_criterion(4, "closed-form ridge weight lands on the risk minimizer",
                  1.0, [] {
                      ExperimentSpec spec;
                      spec.name = "lambda-star";
                      return from_result(run_experiment(spec));
                  });

    run_criterion(5, "regularized schedules drive the error to zero", 300.0,
                  [] {
                      ExperimentSpec spec;
                      spec.name = "schedules";
                      return from_result(run_experiment(spec));
                  });

    run_criterion(6, "artifacts are byte-identical across thread counts",
                  120.0, [] {
        Outcome out;
        const std::string base =
            "experiment rerm-mse --reps 3000 --seed 99 --format json ";
        const std::vector<int> threads = {1, 4, 8};
        std::vector<std::string> contents;
        for (const int t : threads) {
            const std::string path =
                "acc_threads_" + std::to_string(t) + ".json";
            if (run_cmd(base + "--threads " + std::to_string(t) + " --out " +
                        path) != 0) {
                out.pass = false;
                out.why = "experiment run failed at threads=" +
                          std::to_string(t);
                return out;
            }
            contents.push_back(slurp(path));
        }
        if (contents[0].empty()) {
            out.pass = false;
            out.why = "empty artifact";
            return out;
        }
        for (std::size_t i = 1; i < contents.size(); ++i) {
            if (contents[i] != contents[0]) {
                out.pass = false;
                out.why = "artifact differs between threads=1 and threads=" +
                          std::to_string(threads[i]);
                return out;
            }
        }
        if (run_cmd("run --algo rerm --mu0 1 --mu 0.5 --N 4 -T 100 --seed 5 "
                    "--out acc_run_a.csv") != 0 ||
            run_cmd("run --algo rerm --mu0 1 --mu 0.5 --N 4 -T 100 --seed 5 "
                    "--out acc_run_b.csv") != 0) {
            out.pass = false;
            out.why = "trajectory run failed";
            return out;
        }
        if (slurp("acc_run_a.csv") != slurp("acc_run_b.csv") ||
            slurp("acc_run_a.csv").empty()) {
            out.pass = false;
            out.why = "repeated trajectory runs are not byte-identical";
        }
        return out;
    });

    run_criterion(
        7, "numeric minimizer and gradient cross-checks", 60.0, [] {
            Outcome out;
            RngStream gen(4242, 0);
            for (int i = 0; i < 1000; ++i) {
                const ScalarShiftModel m = random_scalar_instance(gen);
                const SolutionReport sol = solve_scalar(m);
                const double numeric = theta_po_numeric_scalar(m);
                const double err = std::abs(numeric - sol.theta_po);
                if (err > 1e-8 * (1.0 + std::abs(sol.theta_po))) {
                    out.pass = false;
                    char buf[160];
                    std::snprintf(buf, sizeof(buf),
                                  "minimizer mismatch %.3g at instance %d",
                                  err, i);
                    out.why = buf;
                    return out;
                }
            }
            RngStream qgen(4243, 0);
            for (int i = 0; i < 1000; ++i) {
                const int d = 1 + static_cast<int>(qgen.next_uniform() * 5);
                const Eigen::MatrixXd a = random_spd_matrix(d, qgen);
                const QuadraticLoss loss(a);
                Eigen::VectorXd z(d), th(d);
                for (int k = 0; k < d; ++k) {
                    z[k] = 2.0 * qgen.next_gaussian();
                    th[k] = 2.0 * qgen.next_gaussian();
                }
                const Eigen::VectorXd g = loss.grad_theta(z, th);
                const Eigen::VectorXd fd = fd_gradient(
                    [&](const Eigen::VectorXd& x) {
                        return loss.value(z, x);
                    },
                    th);
                for (int k = 0; k < d; ++k) {
                    const double rel = std::abs(fd[k] - g[k]) /
                                       (1.0 + std::abs(g[k]));
                    if (rel > 1e-6) {
                        out.pass = false;
                        char buf[160];
                        std::snprintf(
                            buf, sizeof(buf),
                            "gradient mismatch %.3g at instance %d coord %d",
                            rel, i, k);
                        out.why = buf;
                        return out;
                    }
                }
            }
            return out;
        });

    if (g_failures > 0) {
        std::printf("%d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}
