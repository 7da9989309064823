#include <cstdio>

void addTo(int& dst, const int v) {
    dst = dst + v;
}

void scale(double& d, double s) {
    d = d * s;
}

void accumulate(double& sum, const double v) {
    sum = sum + v;
}

int main() {
    int total = 0;
    double dsum = 0.0;
    for (int i = 0; i < 3; i++) {
        int local = i * 2;
        addTo(local, 1);
        addTo(total, local);
        double d = 0.5;
        scale(d, 2.0 + i);
        accumulate(dsum, d);
    }
    for (int k = 0; k < 2; k++) {
        addTo(total, k);
    }
    {
        int inner[2] = {7, 8};
        addTo(inner[0], 3);
        addTo(total, inner[0]);
    }
    printf("%d %.3f\n", total, dsum);
    return 0;
}
