#include <math.h>
#include <stdio.h>

#include "oodcp.h"

int main(void) {
    OodcpGCurve *curve = NULL;
    if (oodcp_gcurve_new(OODCP_FAMILY_TOTAL_VARIATION, 0.1, &curve) != OODCP_STATUS_OK) {
        fprintf(stderr, "%s\n", oodcp_last_error_message());
        return 1;
    }
    double g = 0.0;
    oodcp_gcurve_g(curve, 0.5, &g);
    oodcp_gcurve_free(curve);

    double scores[200];
    for (int i = 0; i < 200; i++) {
        scores[i] = (double)(i + 1);
    }
    OodcpCalibration *cal = NULL;
    oodcp_calibration_new(&cal);
    oodcp_calibration_add_domain(cal, scores, 100);
    oodcp_calibration_add_domain(cal, scores + 100, 100);
    OodcpThresholdReport report;
    OodcpStatus status = oodcp_robust_threshold(cal, OODCP_FAMILY_KULLBACK_LEIBLER, 0.5, 0.01, 0, &report);
    oodcp_calibration_free(cal);

    printf("g=%.3f status=%d feasible=%d threshold=%f\n", g, (int)status, (int)report.feasible, report.threshold);
    return fabs(g - 0.4) < 1e-12 && status == OODCP_STATUS_INFEASIBLE && isinf(report.threshold) ? 0 : 2;
}
