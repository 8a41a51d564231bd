#include <math.h>
#include <stdio.h>
#include <string.h>

#include "vgranger.h"

#define CHECK(cond)                                                  \
    do {                                                             \
        if (!(cond)) {                                               \
            fprintf(stderr, "line %d: %s (%s)\n", __LINE__, #cond,   \
                    vg_last_error());                                \
            return 1;                                                \
        }                                                            \
    } while (0)

int main(void) {
    VgBundle *b = NULL;
    CHECK(vg_bundle_generate(VG_DGP_CAUSAL, 300, 1.0, 2, 1, 5, &b) == VG_STATUS_OK);
    size_t t = vg_bundle_len(b);
    CHECK(t == 300);
    CHECK(vg_bundle_columns(b, VG_SERIES_P) == 2);

    double x[300], y[300], z[300];
    CHECK(vg_bundle_copy(b, VG_SERIES_X, 0, x, t) == VG_STATUS_OK);
    CHECK(vg_bundle_copy(b, VG_SERIES_Y, 0, y, t) == VG_STATUS_OK);
    CHECK(vg_bundle_copy(b, VG_SERIES_Z, 0, z, t) == VG_STATUS_OK);
    CHECK(vg_bundle_copy(b, VG_SERIES_Z, 1, z, t) == VG_STATUS_INVALID_ARGUMENT);
    CHECK(strlen(vg_last_error()) > 0);

    VgGrangerResult r;
    CHECK(vg_linear_granger(x, y, t, z, 1, 2, 0.05, &r) == VG_STATUS_OK);
    CHECK(r.method == VG_METHOD_LINEAR && r.p_value >= 0.0 && r.p_value <= 1.0);
    CHECK(vg_gc_r2(x, y, t, NULL, 0, 2, 10, 6, 5, 1, &r) == VG_STATUS_OK);
    CHECK(isnan(r.p_value) && r.df_num == 0);
    CHECK(vg_linear_granger(x, y, t, NULL, 0, 0, 0.05, &r) == VG_STATUS_DATA);

    double c;
    CHECK(vg_f_cdf(1.0, 2.0, 2.0, &c) == VG_STATUS_OK);
    CHECK(fabs(c - 0.5) < 1e-12);
    CHECK(vg_f_cdf(1.0, -1.0, 2.0, &c) == VG_STATUS_INVALID_ARGUMENT);

    VgModel *m = NULL;
    CHECK(vg_model_train(b, "{\"epochs\": 2, \"gru_hidden\": 4}", &m) == VG_STATUS_OK);
    CHECK(vg_model_dz(m) == 1);
    double zhat[300];
    CHECK(vg_model_estimate(m, b, zhat, t) == VG_STATUS_OK);
    CHECK(isfinite(zhat[0]) && isfinite(zhat[299]));

    vg_model_free(m);
    vg_bundle_free(b);
    vg_bundle_free(NULL);
    printf("ok\n");
    return 0;
}
