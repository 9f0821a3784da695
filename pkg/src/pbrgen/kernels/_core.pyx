# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled render kernels.

Transliteration of ``_pure.py``; both backends must stay bit-identical, so
keep every floating-point expression in the same shape and order. Compiled
with -ffp-contract=off (see setup.py) to forbid FMA contraction.
"""

from libc.math cimport sqrt, floor, sin, cos, acos, atan2, M_PI

import numpy as np

DEF EPS = 1e-4
DEF INF = 1e30
DEF STACK_MAX = 128

cdef double INV_2PI2 = 1.0 / (2.0 * M_PI * M_PI)


cdef inline unsigned long long _mix64(unsigned long long z) noexcept nogil:
    z = (z ^ (z >> 30)) * <unsigned long long>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <unsigned long long>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef inline unsigned long long _rng_state(unsigned long long seed,
                                          unsigned long long x,
                                          unsigned long long y,
                                          unsigned long long s) noexcept nogil:
    cdef unsigned long long h = _mix64(seed ^ <unsigned long long>0x9E3779B97F4A7C15)
    h = _mix64(h ^ x)
    h = _mix64(h ^ y)
    h = _mix64(h ^ s)
    return h


cdef inline double _rng_next(unsigned long long* state) noexcept nogil:
    state[0] = state[0] + <unsigned long long>0x9E3779B97F4A7C15
    cdef unsigned long long z = _mix64(state[0])
    return <double>(z >> 11) * 1.1102230246251565e-16  # 2^-53


cdef struct View:
    const double* nbounds
    const int* nchild
    const int* ncount
    const int* naxis
    const int* prim
    const double* tv0
    const double* te1
    const double* te2
    const unsigned char* tri_block
    int n_nodes


cdef inline int _tri_hit(const View* v, int tri,
                         double ox, double oy, double oz,
                         double dx, double dy, double dz,
                         double tmin, double tmax,
                         double* ot, double* ou, double* ow) noexcept nogil:
    cdef const double* v0 = v.tv0 + 3 * tri
    cdef const double* e1 = v.te1 + 3 * tri
    cdef const double* e2 = v.te2 + 3 * tri
    cdef double px = dy * e2[2] - dz * e2[1]
    cdef double py = dz * e2[0] - dx * e2[2]
    cdef double pz = dx * e2[1] - dy * e2[0]
    cdef double det = e1[0] * px + e1[1] * py + e1[2] * pz
    if -1e-12 < det < 1e-12:
        return 0
    cdef double inv_det = 1.0 / det
    cdef double sx = ox - v0[0]
    cdef double sy = oy - v0[1]
    cdef double sz = oz - v0[2]
    cdef double u = (sx * px + sy * py + sz * pz) * inv_det
    if u < 0.0 or u > 1.0:
        return 0
    cdef double qx = sy * e1[2] - sz * e1[1]
    cdef double qy = sz * e1[0] - sx * e1[2]
    cdef double qz = sx * e1[1] - sy * e1[0]
    cdef double w = (dx * qx + dy * qy + dz * qz) * inv_det
    if w < 0.0 or u + w > 1.0:
        return 0
    cdef double t = (e2[0] * qx + e2[1] * qy + e2[2] * qz) * inv_det
    if t <= tmin or t >= tmax:
        return 0
    ot[0] = t
    ou[0] = u
    ow[0] = w
    return 1


cdef inline double _box_entry(const double* box,
                              double ox, double oy, double oz,
                              double dx, double dy, double dz,
                              double ix, double iy, double iz,
                              double tmin, double tmax) noexcept nogil:
    # returns the entry distance (>= tmin) or -1.0 on miss
    cdef double mn, mx, t1, t2, tmp
    mn = box[0]
    mx = box[3]
    if dx == 0.0:
        if ox < mn or ox > mx:
            return -1.0
    else:
        t1 = (mn - ox) * ix
        t2 = (mx - ox) * ix
        if t1 > t2:
            tmp = t1; t1 = t2; t2 = tmp
        if t1 > tmin:
            tmin = t1
        if t2 < tmax:
            tmax = t2
        if tmin > tmax:
            return -1.0
    mn = box[1]
    mx = box[4]
    if dy == 0.0:
        if oy < mn or oy > mx:
            return -1.0
    else:
        t1 = (mn - oy) * iy
        t2 = (mx - oy) * iy
        if t1 > t2:
            tmp = t1; t1 = t2; t2 = tmp
        if t1 > tmin:
            tmin = t1
        if t2 < tmax:
            tmax = t2
        if tmin > tmax:
            return -1.0
    mn = box[2]
    mx = box[5]
    if dz == 0.0:
        if oz < mn or oz > mx:
            return -1.0
    else:
        t1 = (mn - oz) * iz
        t2 = (mx - oz) * iz
        if t1 > t2:
            tmp = t1; t1 = t2; t2 = tmp
        if t1 > tmin:
            tmin = t1
        if t2 < tmax:
            tmax = t2
        if tmin > tmax:
            return -1.0
    return tmin


cdef int _traverse_nearest(const View* v,
                           double ox, double oy, double oz,
                           double dx, double dy, double dz,
                           double tmin, double tmax,
                           double* ot, double* ou, double* ov) noexcept nogil:
    cdef int best_tri = -1
    cdef double best_t = tmax
    cdef double best_u = 0.0
    cdef double best_v = 0.0
    cdef double t, u, w, te, tn, tf, ix, iy, iz
    cdef int nstack[STACK_MAX]
    cdef double tstack[STACK_MAX]
    cdef int sp, ni, count, start, k, tri, near, far
    cdef double dd[3]
    if v.n_nodes == 0:
        ot[0] = best_t; ou[0] = best_u; ov[0] = best_v
        return best_tri
    ix = 1.0 / dx if dx != 0.0 else 0.0
    iy = 1.0 / dy if dy != 0.0 else 0.0
    iz = 1.0 / dz if dz != 0.0 else 0.0
    dd[0] = dx; dd[1] = dy; dd[2] = dz
    te = _box_entry(v.nbounds, ox, oy, oz, dx, dy, dz, ix, iy, iz,
                    tmin, best_t)
    if te < 0.0:
        ot[0] = best_t; ou[0] = best_u; ov[0] = best_v
        return best_tri
    sp = 1
    nstack[0] = 0
    tstack[0] = te
    while sp > 0:
        sp -= 1
        ni = nstack[sp]
        if tstack[sp] > best_t:
            continue
        count = v.ncount[ni]
        if count > 0:
            start = v.nchild[ni]
            for k in range(start, start + count):
                tri = v.prim[k]
                if _tri_hit(v, tri, ox, oy, oz, dx, dy, dz, tmin, best_t, &t, &u, &w):
                    best_t = t
                    best_u = u
                    best_v = w
                    best_tri = tri
        else:
            if dd[v.naxis[ni]] >= 0.0:
                near = ni + 1; far = v.nchild[ni]
            else:
                near = v.nchild[ni]; far = ni + 1
            tf = _box_entry(v.nbounds + 6 * far, ox, oy, oz, dx, dy, dz,
                            ix, iy, iz, tmin, best_t)
            if tf >= 0.0:
                nstack[sp] = far
                tstack[sp] = tf
                sp += 1
            tn = _box_entry(v.nbounds + 6 * near, ox, oy, oz, dx, dy, dz,
                            ix, iy, iz, tmin, best_t)
            if tn >= 0.0:
                nstack[sp] = near
                tstack[sp] = tn
                sp += 1
    ot[0] = best_t
    ou[0] = best_u
    ov[0] = best_v
    return best_tri


cdef int _traverse_blocked(const View* v,
                           double ox, double oy, double oz,
                           double dx, double dy, double dz,
                           double tmin, double tmax) noexcept nogil:
    cdef int stack[STACK_MAX]
    cdef int sp, ni, count, start, k, tri, left, right
    cdef double t, u, w, ix, iy, iz
    if v.n_nodes == 0:
        return 0
    ix = 1.0 / dx if dx != 0.0 else 0.0
    iy = 1.0 / dy if dy != 0.0 else 0.0
    iz = 1.0 / dz if dz != 0.0 else 0.0
    if _box_entry(v.nbounds, ox, oy, oz, dx, dy, dz, ix, iy, iz,
                  tmin, tmax) < 0.0:
        return 0
    sp = 1
    stack[0] = 0
    while sp > 0:
        sp -= 1
        ni = stack[sp]
        count = v.ncount[ni]
        if count > 0:
            start = v.nchild[ni]
            for k in range(start, start + count):
                tri = v.prim[k]
                if not v.tri_block[tri]:
                    continue
                if _tri_hit(v, tri, ox, oy, oz, dx, dy, dz, tmin, tmax, &t, &u, &w):
                    return 1
        else:
            left = ni + 1
            right = v.nchild[ni]
            if _box_entry(v.nbounds + 6 * right, ox, oy, oz, dx, dy, dz,
                          ix, iy, iz, tmin, tmax) >= 0.0:
                stack[sp] = right
                sp += 1
            if _box_entry(v.nbounds + 6 * left, ox, oy, oz, dx, dy, dz,
                          ix, iy, iz, tmin, tmax) >= 0.0:
                stack[sp] = left
                sp += 1
    return 0


cdef View _make_view(const double[:, ::1] nbounds, const int[::1] nchild,
                     const int[::1] ncount, const int[::1] naxis,
                     const int[::1] prim, const double[:, ::1] tv0,
                     const double[:, ::1] te1, const double[:, ::1] te2,
                     const unsigned char[::1] tri_block):
    cdef View v
    v.n_nodes = nbounds.shape[0]
    if v.n_nodes > 0:
        v.nbounds = &nbounds[0, 0]
        v.nchild = &nchild[0]
        v.ncount = &ncount[0]
        v.naxis = &naxis[0]
    else:
        v.nbounds = NULL
        v.nchild = NULL
        v.ncount = NULL
        v.naxis = NULL
    if tv0.shape[0] > 0:
        v.prim = &prim[0]
        v.tv0 = &tv0[0, 0]
        v.te1 = &te1[0, 0]
        v.te2 = &te2[0, 0]
        v.tri_block = &tri_block[0]
    else:
        v.prim = NULL
        v.tv0 = NULL
        v.te1 = NULL
        v.te2 = NULL
        v.tri_block = NULL
    return v


def intersect_rays(nbounds, nchild, ncount, naxis, prim, tv0, te1, te2,
                   tri_block, origins, dirs, tmaxs, out_tri, out_t, out_u, out_v):
    cdef View v = _make_view(nbounds, nchild, ncount, naxis, prim, tv0, te1, te2,
                             tri_block)
    cdef const double[:, ::1] org = origins
    cdef const double[:, ::1] dr = dirs
    cdef const double[::1] tm = tmaxs
    cdef int[::1] otri = out_tri
    cdef double[::1] ot = out_t
    cdef double[::1] ou = out_u
    cdef double[::1] ov = out_v
    cdef Py_ssize_t i, n = org.shape[0]
    cdef double t, u, w
    cdef int tri
    with nogil:
        for i in range(n):
            tri = _traverse_nearest(&v, org[i, 0], org[i, 1], org[i, 2],
                                    dr[i, 0], dr[i, 1], dr[i, 2],
                                    EPS, tm[i], &t, &u, &w)
            otri[i] = tri
            ot[i] = t
            ou[i] = u
            ov[i] = w


def occluded_rays(nbounds, nchild, ncount, naxis, prim, tv0, te1, te2,
                  tri_block, origins, dirs, tmins, tmaxs, out):
    cdef View v = _make_view(nbounds, nchild, ncount, naxis, prim, tv0, te1, te2,
                             tri_block)
    cdef const double[:, ::1] org = origins
    cdef const double[:, ::1] dr = dirs
    cdef const double[::1] t0 = tmins
    cdef const double[::1] t1 = tmaxs
    cdef unsigned char[::1] o = out
    cdef Py_ssize_t i, n = org.shape[0]
    with nogil:
        for i in range(n):
            o[i] = 1 if _traverse_blocked(&v, org[i, 0], org[i, 1], org[i, 2],
                                          dr[i, 0], dr[i, 1], dr[i, 2],
                                          t0[i], t1[i]) else 0


cdef inline void _env_uv(double dx, double dy, double dz,
                         double* u, double* v) noexcept nogil:
    cdef double cy = dy
    if cy > 1.0:
        cy = 1.0
    if cy < -1.0:
        cy = -1.0
    cdef double theta = acos(cy)
    cdef double phi = atan2(dx, -dz)
    cdef double uu = (phi + M_PI) / (2.0 * M_PI)
    if uu >= 1.0:
        uu = 0.0
    u[0] = uu
    v[0] = theta / M_PI


cdef inline void _env_dir(double u, double v,
                          double* dx, double* dy, double* dz) noexcept nogil:
    cdef double theta = v * M_PI
    cdef double phi = (u - 0.5) * (2.0 * M_PI)
    cdef double st = sin(theta)
    dx[0] = st * sin(phi)
    dy[0] = cos(theta)
    dz[0] = -st * cos(phi)


cdef inline void _env_eval(const double* img, int h, int w, double u, double v,
                           double* outr, double* outg, double* outb) noexcept nogil:
    cdef double fu = u * w - 0.5
    cdef double fv = v * h - 0.5
    cdef double iu = floor(fu)
    cdef double jv = floor(fv)
    cdef double du = fu - iu
    cdef double dv = fv - jv
    cdef long i0 = (<long>iu) % w
    if i0 < 0:
        i0 += w
    cdef long i1 = i0 + 1
    if i1 == w:
        i1 = 0
    cdef long j0 = <long>jv
    if j0 < 0:
        j0 = 0
    if j0 > h - 1:
        j0 = h - 1
    cdef long j1 = j0 + 1
    if j1 > h - 1:
        j1 = h - 1
    cdef double w00 = (1.0 - du) * (1.0 - dv)
    cdef double w10 = du * (1.0 - dv)
    cdef double w01 = (1.0 - du) * dv
    cdef double w11 = du * dv
    cdef const double* a = img + (j0 * w + i0) * 3
    cdef const double* b = img + (j0 * w + i1) * 3
    cdef const double* c = img + (j1 * w + i0) * 3
    cdef const double* e = img + (j1 * w + i1) * 3
    outr[0] = w00 * a[0] + w10 * b[0] + w01 * c[0] + w11 * e[0]
    outg[0] = w00 * a[1] + w10 * b[1] + w01 * c[1] + w11 * e[1]
    outb[0] = w00 * a[2] + w10 * b[2] + w01 * c[2] + w11 * e[2]


cdef inline int _search_cdf(const double* cdf, int n, double xi) noexcept nogil:
    cdef int lo = 0
    cdef int hi = n - 1
    cdef int mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if cdf[mid] > xi:
            hi = mid
        else:
            lo = mid + 1
    return lo


cdef inline double _env_pdf_dir(const double* env_pdf, int h, int w,
                                double u, double v) noexcept nogil:
    cdef double st = sin(v * M_PI)
    if st <= 1e-9:
        return 0.0
    cdef int i = <int>(u * w)
    if i > w - 1:
        i = w - 1
    cdef int j = <int>(v * h)
    if j > h - 1:
        j = h - 1
    return env_pdf[j * w + i] * INV_2PI2 / st


def render_path_rows(nbounds, nchild, ncount, naxis, prim,
                     tv0, te1, te2, tgn, tn0, tn1, tn2, tuv0, tuv1, tuv2,
                     tri_mat, tri_block,
                     mat_diffuse, mat_alpha, mat_emission, mat_two, mat_tex,
                     tex_data, tex_off, tex_w, tex_h,
                     em_tri, em_cdf, em_pdf_area,
                     env_img, env_marg, env_cond, env_pdf,
                     cam, spp, max_depth, rr_start, seed, indoor_on, env_on,
                     out, row0, row1):
    cdef View v = _make_view(nbounds, nchild, ncount, naxis, prim, tv0, te1, te2,
                             tri_block)
    cdef const double[:, ::1] gn = tgn
    cdef const double[:, ::1] n0 = tn0
    cdef const double[:, ::1] n1 = tn1
    cdef const double[:, ::1] n2 = tn2
    cdef const double[:, ::1] uv0 = tuv0
    cdef const double[:, ::1] uv1 = tuv1
    cdef const double[:, ::1] uv2 = tuv2
    cdef const int[::1] tmat = tri_mat
    cdef const double[:, ::1] mdiff = mat_diffuse
    cdef const double[::1] malpha = mat_alpha
    cdef const double[:, ::1] memit = mat_emission
    cdef const unsigned char[::1] mtwo = mat_two
    cdef const int[::1] mtex = mat_tex
    cdef const double[::1] texd = tex_data
    cdef const long long[::1] texo = tex_off
    cdef const int[::1] texw = tex_w
    cdef const int[::1] texh = tex_h
    cdef const int[::1] emtri = em_tri
    cdef const double[::1] emcdf = em_cdf
    cdef const double[::1] empdf = em_pdf_area
    cdef const double[:, :, ::1] eimg = env_img
    cdef const double[::1] emarg = env_marg
    cdef const double[:, ::1] econd = env_cond
    cdef const double[:, ::1] epdf = env_pdf
    cdef const double[::1] c = cam
    cdef double[:, :, ::1] o = out
    cdef int c_spp = spp
    cdef int c_maxdepth = max_depth
    cdef int c_rrstart = rr_start
    cdef unsigned long long c_seed = seed
    cdef int c_indoor = indoor_on
    cdef int c_env = env_on
    cdef int c_row0 = row0
    cdef int c_row1 = row1
    cdef int eh = eimg.shape[0]
    cdef int ew = eimg.shape[1]
    cdef int n_em = emtri.shape[0]
    cdef int height = o.shape[0]
    cdef int width = o.shape[1]
    cdef double inv_pi = 1.0 / M_PI
    cdef long nan_count = 0

    cdef const double* eimg_p = &eimg[0, 0, 0]
    cdef const double* emarg_p = &emarg[0]
    cdef const double* econd_p = &econd[0, 0]
    cdef const double* epdf_p = &epdf[0, 0]

    cdef int x, y, s, depth, passes, tri, mi, le_idx, lt, lmat, ti
    cdef int from_camera, front, two, i, j, light_probe
    cdef unsigned long long state
    cdef double ndc_x, ndc_y, pdx, pdy, pdz, plen
    cdef double accr, accg, accb, lr, lg, lb, br, bg, bb
    cdef double prev_pdf, ox, oy, oz, dx, dy, dz, t, hu, hv
    cdef double eu, ev, er, eg, eb, pe, w, px, py, pz
    cdef double gx, gy, gz, snx, sny, snz, sl, w0
    cdef double alr, alg, alb, tu, tv, cosl, pl, pla, pb
    cdef double xi, xi2, xi3, su, ba, bb_, lpx, lpy, lpz
    cdef double wix, wiy, wiz, d2, dist, cos_s, cos_l, scale, st, lo, seg
    cdef double fj, fi, q, r_, phi, lx, ly, lz
    cdef double hx, hy, hz, txx, txy, txz, tl, bxx, bxy, bxz
    cdef long fti, ftj, base
    cdef int tw, th

    with nogil:
        for y in range(c_row0, c_row1):
            ndc_y = 1.0 - ((y + 0.5) / height) * 2.0
            for x in range(width):
                ndc_x = ((x + 0.5) / width) * 2.0 - 1.0
                pdx = c[9] + ndc_x * c[12] * c[3] + ndc_y * c[13] * c[6]
                pdy = c[10] + ndc_x * c[12] * c[4] + ndc_y * c[13] * c[7]
                pdz = c[11] + ndc_x * c[12] * c[5] + ndc_y * c[13] * c[8]
                plen = sqrt(pdx * pdx + pdy * pdy + pdz * pdz)
                pdx /= plen
                pdy /= plen
                pdz /= plen
                accr = 0.0
                accg = 0.0
                accb = 0.0
                for s in range(c_spp):
                    state = _rng_state(c_seed, <unsigned long long>x,
                                       <unsigned long long>y,
                                       <unsigned long long>s)
                    ox = c[0]; oy = c[1]; oz = c[2]
                    dx = pdx; dy = pdy; dz = pdz
                    lr = 0.0; lg = 0.0; lb = 0.0
                    br = 1.0; bg = 1.0; bb = 1.0
                    prev_pdf = 0.0
                    from_camera = 1
                    depth = 0
                    passes = 0
                    light_probe = 0
                    while True:
                        tri = _traverse_nearest(&v, ox, oy, oz, dx, dy, dz,
                                                EPS, INF, &t, &hu, &hv)
                        if tri < 0:
                            if c_env:
                                _env_uv(dx, dy, dz, &eu, &ev)
                                _env_eval(eimg_p, eh, ew, eu, ev, &er, &eg, &eb)
                                if from_camera:
                                    w = 1.0
                                else:
                                    pe = _env_pdf_dir(epdf_p, eh, ew, eu, ev)
                                    w = prev_pdf * prev_pdf / (prev_pdf * prev_pdf + pe * pe)
                                lr += br * er * w
                                lg += bg * eg * w
                                lb += bb * eb * w
                            break
                        mi = tmat[tri]
                        if malpha[mi] == 0.0:
                            passes += 1
                            if passes > 32:
                                break
                            ox = ox + (t + EPS) * dx
                            oy = oy + (t + EPS) * dy
                            oz = oz + (t + EPS) * dz
                            continue
                        px = ox + t * dx
                        py = oy + t * dy
                        pz = oz + t * dz
                        gx = gn[tri, 0]; gy = gn[tri, 1]; gz = gn[tri, 2]
                        front = 1 if (dx * gx + dy * gy + dz * gz) < 0.0 else 0
                        two = mtwo[mi]
                        if two and not front:
                            gx = -gx
                            gy = -gy
                            gz = -gz
                        w0 = 1.0 - hu - hv
                        snx = w0 * n0[tri, 0] + hu * n1[tri, 0] + hv * n2[tri, 0]
                        sny = w0 * n0[tri, 1] + hu * n1[tri, 1] + hv * n2[tri, 1]
                        snz = w0 * n0[tri, 2] + hu * n1[tri, 2] + hv * n2[tri, 2]
                        sl = sqrt(snx * snx + sny * sny + snz * snz)
                        if sl == 0.0:
                            snx = gx; sny = gy; snz = gz
                        else:
                            snx /= sl
                            sny /= sl
                            snz /= sl
                            if snx * gx + sny * gy + snz * gz < 0.0:
                                snx = -snx
                                sny = -sny
                                snz = -snz
                        if c_indoor and (memit[mi, 0] > 0.0 or memit[mi, 1] > 0.0
                                         or memit[mi, 2] > 0.0):
                            if front or two:
                                if from_camera:
                                    w = 1.0
                                else:
                                    pla = empdf[tri]
                                    if pla > 0.0:
                                        cosl = dx * gn[tri, 0] + dy * gn[tri, 1] + dz * gn[tri, 2]
                                        if cosl < 0.0:
                                            cosl = -cosl
                                        if cosl > 1e-9:
                                            pl = pla * (t * t) / cosl
                                            w = prev_pdf * prev_pdf / (prev_pdf * prev_pdf + pl * pl)
                                        else:
                                            w = 1.0
                                    else:
                                        w = 1.0
                                lr += br * memit[mi, 0] * w
                                lg += bg * memit[mi, 1] * w
                                lb += bb * memit[mi, 2] * w
                        if light_probe:
                            # final MIS-completion segment: emission/env only
                            break
                        ti = mtex[mi]
                        if ti >= 0:
                            tu = w0 * uv0[tri, 0] + hu * uv1[tri, 0] + hv * uv2[tri, 0]
                            tv = w0 * uv0[tri, 1] + hu * uv1[tri, 1] + hv * uv2[tri, 1]
                            tw = texw[ti]
                            th = texh[ti]
                            fti = (<long>floor(tu * tw)) % tw
                            if fti < 0:
                                fti += tw
                            ftj = (<long>floor(tv * th)) % th
                            if ftj < 0:
                                ftj += th
                            base = texo[ti] + (ftj * tw + fti) * 3
                            alr = texd[base]
                            alg = texd[base + 1]
                            alb = texd[base + 2]
                        else:
                            alr = mdiff[mi, 0]
                            alg = mdiff[mi, 1]
                            alb = mdiff[mi, 2]
                        if c_indoor and n_em > 0:
                            xi = _rng_next(&state)
                            xi2 = _rng_next(&state)
                            xi3 = _rng_next(&state)
                            le_idx = _search_cdf(&emcdf[0], n_em, xi)
                            lt = emtri[le_idx]
                            su = sqrt(xi2)
                            ba = su * (1.0 - xi3)
                            bb_ = su * xi3
                            lpx = v.tv0[3 * lt] + ba * v.te1[3 * lt] + bb_ * v.te2[3 * lt]
                            lpy = v.tv0[3 * lt + 1] + ba * v.te1[3 * lt + 1] + bb_ * v.te2[3 * lt + 1]
                            lpz = v.tv0[3 * lt + 2] + ba * v.te1[3 * lt + 2] + bb_ * v.te2[3 * lt + 2]
                            wix = lpx - px
                            wiy = lpy - py
                            wiz = lpz - pz
                            d2 = wix * wix + wiy * wiy + wiz * wiz
                            dist = sqrt(d2)
                            if dist > 4.0 * EPS:
                                wix /= dist
                                wiy /= dist
                                wiz /= dist
                                cos_s = snx * wix + sny * wiy + snz * wiz
                                cos_l = -(wix * gn[lt, 0] + wiy * gn[lt, 1] + wiz * gn[lt, 2])
                                lmat = tmat[lt]
                                if mtwo[lmat] and cos_l < 0.0:
                                    cos_l = -cos_l
                                if cos_s > 0.0 and cos_l > 1e-9:
                                    if not _traverse_blocked(&v, px, py, pz,
                                                             wix, wiy, wiz,
                                                             EPS, dist - EPS):
                                        pla = empdf[lt]
                                        pl = pla * d2 / cos_l
                                        pb = cos_s * inv_pi
                                        w = pl * pl / (pl * pl + pb * pb)
                                        scale = cos_s * cos_l / (d2 * pla) * inv_pi * w
                                        lr += br * alr * memit[lmat, 0] * scale
                                        lg += bg * alg * memit[lmat, 1] * scale
                                        lb += bb * alb * memit[lmat, 2] * scale
                        if c_env:
                            xi = _rng_next(&state)
                            xi2 = _rng_next(&state)
                            j = _search_cdf(emarg_p, eh, xi)
                            lo = emarg_p[j - 1] if j > 0 else 0.0
                            seg = emarg_p[j] - lo
                            fj = (xi - lo) / seg if seg > 0.0 else 0.5
                            ev = (j + fj) / eh
                            i = _search_cdf(econd_p + j * ew, ew, xi2)
                            lo = econd_p[j * ew + i - 1] if i > 0 else 0.0
                            seg = econd_p[j * ew + i] - lo
                            fi = (xi2 - lo) / seg if seg > 0.0 else 0.5
                            eu = (i + fi) / ew
                            _env_dir(eu, ev, &wix, &wiy, &wiz)
                            cos_s = snx * wix + sny * wiy + snz * wiz
                            if cos_s > 0.0:
                                st = sin(ev * M_PI)
                                if st > 1e-9:
                                    pe = epdf_p[j * ew + i] * INV_2PI2 / st
                                    if pe > 0.0:
                                        if not _traverse_blocked(&v, px, py, pz,
                                                                 wix, wiy, wiz,
                                                                 EPS, INF):
                                            _env_eval(eimg_p, eh, ew, eu, ev,
                                                      &er, &eg, &eb)
                                            pb = cos_s * inv_pi
                                            w = pe * pe / (pe * pe + pb * pb)
                                            scale = cos_s / pe * inv_pi * w
                                            lr += br * alr * er * scale
                                            lg += bg * alg * eg * scale
                                            lb += bb * alb * eb * scale
                        depth += 1
                        if depth >= c_maxdepth:
                            # scatter once more as a light probe so the BSDF
                            # half of the MIS pair completes the estimator
                            light_probe = 1
                        xi = _rng_next(&state)
                        xi2 = _rng_next(&state)
                        r_ = sqrt(xi)
                        phi = 2.0 * M_PI * xi2
                        lx = r_ * cos(phi)
                        ly = r_ * sin(phi)
                        lz = sqrt(1.0 - xi)
                        if lz <= 0.0:
                            break
                        if -0.9 < sny < 0.9:
                            hx = 0.0; hy = 1.0; hz = 0.0
                        else:
                            hx = 1.0; hy = 0.0; hz = 0.0
                        txx = hy * snz - hz * sny
                        txy = hz * snx - hx * snz
                        txz = hx * sny - hy * snx
                        tl = sqrt(txx * txx + txy * txy + txz * txz)
                        txx /= tl
                        txy /= tl
                        txz /= tl
                        bxx = sny * txz - snz * txy
                        bxy = snz * txx - snx * txz
                        bxz = snx * txy - sny * txx
                        dx = lx * txx + ly * bxx + lz * snx
                        dy = lx * txy + ly * bxy + lz * sny
                        dz = lx * txz + ly * bxz + lz * snz
                        prev_pdf = lz * inv_pi
                        br *= alr
                        bg *= alg
                        bb *= alb
                        from_camera = 0
                        if depth >= c_rrstart and not light_probe:
                            q = br
                            if bg > q:
                                q = bg
                            if bb > q:
                                q = bb
                            if q > 0.95:
                                q = 0.95
                            if q < 0.05:
                                q = 0.05
                            xi = _rng_next(&state)
                            if xi >= q:
                                break
                            br /= q
                            bg /= q
                            bb /= q
                        ox = px; oy = py; oz = pz
                    if lr != lr or lg != lg or lb != lb:
                        nan_count += 1
                    else:
                        accr += lr
                        accg += lg
                        accb += lb
                o[y, x, 0] = accr / c_spp
                o[y, x, 1] = accg / c_spp
                o[y, x, 2] = accb / c_spp
    return nan_count
