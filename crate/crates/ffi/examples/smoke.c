#include <stdio.h>
#include "causalbench.h"

int main(void) {
    CbPayoff *g = cb_payoff_ideal();
    CbFcoResult r;
    CbTester *t = NULL;
    CbStatus st = cb_optimize_fco(g, CB_ORDER_B_THEN_A, false, 1e-7, &r, &t);
    if (st != CB_STATUS_OK) {
        char msg[256];
        cb_last_error_message(msg, sizeof msg);
        fprintf(stderr, "error %d: %s\n", (int)st, msg);
        return 1;
    }
    printf("%.6f %.6f %d\n", r.p_star, cb_tester_success(t, g), r.converged);
    cb_tester_free(t);
    cb_payoff_free(g);
    return 0;
}
