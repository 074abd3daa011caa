#include <math.h>
#include <stdio.h>
#include "stackelberg.h"

int main(void) {
    const double beta[2] = {1.0, 0.0};
    StkGame *game = NULL;
    if (stk_game_linear_new(beta, 2, 0.0, 2.0, &game) != STK_STATUS_OK) {
        fprintf(stderr, "create: %s\n", stk_last_error());
        return 1;
    }
    double theta[2], mu[2];
    StkRisks risks;
    if (stk_equilibria(game, theta, mu, 2, &risks) != STK_STATUS_OK) {
        fprintf(stderr, "equilibria: %s\n", stk_last_error());
        return 1;
    }
    if (fabs(risks.dm_leads_risk_dm - 0.4) > 1e-12 || fabs(risks.agents_lead_risk_dm - 0.25) > 1e-12) {
        fprintf(stderr, "unexpected risks %g %g\n", risks.dm_leads_risk_dm, risks.agents_lead_risk_dm);
        return 1;
    }
    double loss;
    if (stk_decision_loss(game, mu, theta, 3, &loss) != STK_STATUS_DIMENSION_MISMATCH) {
        return 1;
    }
    const char *run = "{\"order\": \"reactive\", \"epochs\": 20, \"inner_steps\": 5, \"eta0\": 0.1,"
                      " \"eta_exponent\": 0.75, \"delta0\": 1, \"delta_exponent\": 0.25, \"fast_step\": 0.1}";
    StkTrace *trace = NULL;
    if (stk_run(game, run, 3, &trace) != STK_STATUS_OK || stk_trace_len(trace) != 20) {
        fprintf(stderr, "run: %s\n", stk_last_error());
        return 1;
    }
    StkEpoch rec;
    if (stk_trace_epoch(trace, 19, NULL, NULL, 0, &rec) != STK_STATUS_OK || rec.epoch != 20) {
        return 1;
    }
    printf("ok %s %.6f\n", stk_version(), rec.running_avg_dm);
    stk_trace_free(trace);
    stk_game_free(game);
    return 0;
}
