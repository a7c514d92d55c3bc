// Single atom, empty cavity: stochastic ensemble against the exact cos^2.
#include <cmath>
#include <cstdio>
#include <vector>

#include "tcm/ensemble.hpp"
#include "tcm/exact.hpp"

int main() {
    tcm::ModelParams p;
    p.n_atoms = 1;
    p.atoms_initial = tcm::AtomsInitial::AllExcited;

    tcm::EnsembleConfig cfg;
    cfg.n_traj = 20000;
    cfg.seed = 7;
    cfg.tau_max = 3.0;
    cfg.record_every = 250;
    cfg.observables = {tcm::Observable::RhoEE};
    const auto r = tcm::run_ensemble(p, cfg);

    const auto ex = tcm::exact::closed_evolve(p, r.tau);
    const auto* s = r.find(tcm::Observable::RhoEE);
    std::printf("%8s %12s %12s %12s %8s\n", "tau", "stochastic", "stderr", "exact", "alive");
    for (std::size_t i = 0; i < r.tau.size(); ++i)
        std::printf("%8.3f %12.6f %12.6f %12.6f %8.4f\n", r.tau[i], s->mean[i].real(), s->stderr_re[i],
                    ex.p_excited[i], r.alive_fraction[i]);
}
