#include <math.h>
#include <stdio.h>
#include "pyramid.h"

#define CHECK(cond) do { if (!(cond)) { fprintf(stderr, "failed: %s (%s)\n", #cond, pyramid_last_error()); return 1; } } while (0)

int main(void) {
    double xi[5] = {0, 0, 0, 0, 0};
    double delta[5] = {0, 0, 0, 0, 0};
    double eta[5] = {0, 0, 0, 0, 0};
    PyramidTriple *t = NULL;
    CHECK(pyramid_triple_new(5, xi, delta, eta, &t) == PYRAMID_STATUS_OK);
    double m = 0.0;
    CHECK(pyramid_multiplier_reduced(t, 32, &m) == PYRAMID_STATUS_OK);
    CHECK(fabs(m - 1.0) < 1e-9);
    pyramid_triple_free(t);

    int64_t num = 0, den = 0;
    CHECK(pyramid_p0(5, &num, &den) == PYRAMID_STATUS_OK);
    CHECK(num == 25 && den == 13);

    uint32_t dim = 0;
    CHECK(pyramid_l2_threshold(&dim) == PYRAMID_STATUS_OK);
    CHECK(dim == 16);

    CHECK(pyramid_p0(0, &num, &den) == PYRAMID_STATUS_INVALID_ARGUMENT);
    CHECK(pyramid_last_error()[0] != '\0');
    CHECK(pyramid_decay_bound(NULL, &m) == PYRAMID_STATUS_NULL_POINTER);
    printf("ffi smoke ok %s\n", pyramid_version());
    return 0;
}
