/* Minimal consumer of the C API: build a default field, sample it, and
 * report the strongest measurement point.
 *
 *   cc field_demo.c -I../include -L<target dir> -ldwc_ffi -o field_demo
 */
#include <stdio.h>
#include <stdlib.h>

#include "dwc.h"

int main(void) {
    DwcField *field = NULL;
    if (dwc_field_default(&field) != DWC_STATUS_OK) {
        fprintf(stderr, "field: %s\n", dwc_last_error_message());
        return 1;
    }

    size_t n = dwc_field_n_points(field);
    double *strengths = malloc(n * sizeof(double));
    if (dwc_field_sample(field, 0.0, strengths, n) != DWC_STATUS_OK) {
        fprintf(stderr, "sample: %s\n", dwc_last_error_message());
        return 1;
    }

    size_t index = 0;
    double peak = 0.0;
    if (dwc_field_argmax(field, 0.0, &index, &peak) != DWC_STATUS_OK) {
        fprintf(stderr, "argmax: %s\n", dwc_last_error_message());
        return 1;
    }

    printf("dwc %s: %zu points, argmax %zu at %.3f A/m\n",
           dwc_version(), n, index, peak);

    free(strengths);
    dwc_field_free(field);
    return 0;
}
