"""Pure-Python render kernels.

Reference implementation of the hot loops; the compiled extension in
``_core.pyx`` mirrors this code operation-for-operation so both backends
produce bit-identical images. Keep every floating-point expression in the
same shape in both files (no reassociation, no fused ops).

RNG draw order per path vertex: area-light NEE (3 draws), env NEE (2),
scatter (2), Russian roulette (1, past the start depth).
"""

import math

MASK64 = (1 << 64) - 1
EPS = 1e-4          # self-intersection offset, meters
INF = 1e30
INV_2PI2 = 1.0 / (2.0 * math.pi * math.pi)


def _mix64(z):
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _rng_state(seed, x, y, s):
    h = _mix64((seed ^ 0x9E3779B97F4A7C15) & MASK64)
    h = _mix64(h ^ x)
    h = _mix64(h ^ y)
    h = _mix64(h ^ s)
    return h


def _rng_next(state):
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = _mix64(state)
    return state, (z >> 11) * 1.1102230246251565e-16  # 2^-53


class _View:
    """Scene arrays converted to nested Python lists for scalar access."""

    def __init__(self, nbounds, nchild, ncount, naxis, prim, tv0, te1, te2,
                 tri_block):
        self.nbounds = nbounds.tolist()
        self.nchild = nchild.tolist()
        self.ncount = ncount.tolist()
        self.naxis = naxis.tolist()
        self.prim = prim.tolist()
        self.tv0 = tv0.tolist()
        self.te1 = te1.tolist()
        self.te2 = te2.tolist()
        self.tri_block = tri_block.tolist()
        self.n_nodes = len(self.nbounds)


def _tri_hit(v, tri, ox, oy, oz, dx, dy, dz, tmin, tmax):
    """Moller-Trumbore; returns (t, u, v) or None."""
    v0 = v.tv0[tri]
    e1 = v.te1[tri]
    e2 = v.te2[tri]
    px = dy * e2[2] - dz * e2[1]
    py = dz * e2[0] - dx * e2[2]
    pz = dx * e2[1] - dy * e2[0]
    det = e1[0] * px + e1[1] * py + e1[2] * pz
    if -1e-12 < det < 1e-12:
        return None
    inv_det = 1.0 / det
    sx = ox - v0[0]
    sy = oy - v0[1]
    sz = oz - v0[2]
    u = (sx * px + sy * py + sz * pz) * inv_det
    if u < 0.0 or u > 1.0:
        return None
    qx = sy * e1[2] - sz * e1[1]
    qy = sz * e1[0] - sx * e1[2]
    qz = sx * e1[1] - sy * e1[0]
    w = (dx * qx + dy * qy + dz * qz) * inv_det
    if w < 0.0 or u + w > 1.0:
        return None
    t = (e2[0] * qx + e2[1] * qy + e2[2] * qz) * inv_det
    if t <= tmin or t >= tmax:
        return None
    return t, u, w


def _box_entry(box, ox, oy, oz, dx, dy, dz, ix, iy, iz, tmin, tmax):
    """Slab test with precomputed inverse directions.

    Returns the entry distance (>= tmin) or -1.0 on miss.
    """
    mn = box[0]
    mx = box[3]
    if dx == 0.0:
        if ox < mn or ox > mx:
            return -1.0
    else:
        t1 = (mn - ox) * ix
        t2 = (mx - ox) * ix
        if t1 > t2:
            t1, t2 = t2, t1
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
            t1, t2 = t2, t1
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
            t1, t2 = t2, t1
        if t1 > tmin:
            tmin = t1
        if t2 < tmax:
            tmax = t2
        if tmin > tmax:
            return -1.0
    return tmin


def _traverse_nearest(v, ox, oy, oz, dx, dy, dz, tmin, tmax):
    """Nearest hit. Returns (tri, t, u, v); tri = -1 on miss."""
    best_tri = -1
    best_t = tmax
    best_u = 0.0
    best_v = 0.0
    if v.n_nodes == 0:
        return best_tri, best_t, best_u, best_v
    ix = 1.0 / dx if dx != 0.0 else 0.0
    iy = 1.0 / dy if dy != 0.0 else 0.0
    iz = 1.0 / dz if dz != 0.0 else 0.0
    d = (dx, dy, dz)
    te = _box_entry(v.nbounds[0], ox, oy, oz, dx, dy, dz, ix, iy, iz,
                    tmin, best_t)
    if te < 0.0:
        return best_tri, best_t, best_u, best_v
    nstack = [0] * 128
    tstack = [0.0] * 128
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
                hit = _tri_hit(v, tri, ox, oy, oz, dx, dy, dz, tmin, best_t)
                if hit is not None:
                    best_t, best_u, best_v = hit
                    best_tri = tri
        else:
            if d[v.naxis[ni]] >= 0.0:
                near, far = ni + 1, v.nchild[ni]
            else:
                near, far = v.nchild[ni], ni + 1
            tf = _box_entry(v.nbounds[far], ox, oy, oz, dx, dy, dz,
                            ix, iy, iz, tmin, best_t)
            if tf >= 0.0:
                nstack[sp] = far
                tstack[sp] = tf
                sp += 1
            tn = _box_entry(v.nbounds[near], ox, oy, oz, dx, dy, dz,
                            ix, iy, iz, tmin, best_t)
            if tn >= 0.0:
                nstack[sp] = near
                tstack[sp] = tn
                sp += 1
    return best_tri, best_t, best_u, best_v


def _traverse_blocked(v, ox, oy, oz, dx, dy, dz, tmin, tmax):
    """True if any blocking triangle intersects (tmin, tmax)."""
    if v.n_nodes == 0:
        return False
    ix = 1.0 / dx if dx != 0.0 else 0.0
    iy = 1.0 / dy if dy != 0.0 else 0.0
    iz = 1.0 / dz if dz != 0.0 else 0.0
    if _box_entry(v.nbounds[0], ox, oy, oz, dx, dy, dz, ix, iy, iz,
                  tmin, tmax) < 0.0:
        return False
    stack = [0] * 128
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
                if _tri_hit(v, tri, ox, oy, oz, dx, dy, dz, tmin, tmax) is not None:
                    return True
        else:
            left = ni + 1
            right = v.nchild[ni]
            if _box_entry(v.nbounds[right], ox, oy, oz, dx, dy, dz,
                          ix, iy, iz, tmin, tmax) >= 0.0:
                stack[sp] = right
                sp += 1
            if _box_entry(v.nbounds[left], ox, oy, oz, dx, dy, dz,
                          ix, iy, iz, tmin, tmax) >= 0.0:
                stack[sp] = left
                sp += 1
    return False


def intersect_rays(nbounds, nchild, ncount, naxis, prim, tv0, te1, te2,
                   tri_block, origins, dirs, tmaxs, out_tri, out_t, out_u, out_v):
    v = _View(nbounds, nchild, ncount, naxis, prim, tv0, te1, te2, tri_block)
    org = origins.tolist()
    dr = dirs.tolist()
    tm = tmaxs.tolist()
    for i in range(len(org)):
        o = org[i]
        d = dr[i]
        tri, t, u, w = _traverse_nearest(v, o[0], o[1], o[2], d[0], d[1], d[2],
                                         EPS, tm[i])
        out_tri[i] = tri
        out_t[i] = t
        out_u[i] = u
        out_v[i] = w


def occluded_rays(nbounds, nchild, ncount, naxis, prim, tv0, te1, te2,
                  tri_block, origins, dirs, tmins, tmaxs, out):
    v = _View(nbounds, nchild, ncount, naxis, prim, tv0, te1, te2, tri_block)
    org = origins.tolist()
    dr = dirs.tolist()
    t0 = tmins.tolist()
    t1 = tmaxs.tolist()
    for i in range(len(org)):
        o = org[i]
        d = dr[i]
        out[i] = 1 if _traverse_blocked(v, o[0], o[1], o[2], d[0], d[1], d[2],
                                        t0[i], t1[i]) else 0


def _env_uv(dx, dy, dz):
    cy = dy
    if cy > 1.0:
        cy = 1.0
    if cy < -1.0:
        cy = -1.0
    theta = math.acos(cy)
    phi = math.atan2(dx, -dz)
    u = (phi + math.pi) / (2.0 * math.pi)
    if u >= 1.0:
        u = 0.0
    return u, theta / math.pi


def _env_dir(u, v):
    theta = v * math.pi
    phi = (u - 0.5) * (2.0 * math.pi)
    st = math.sin(theta)
    return st * math.sin(phi), math.cos(theta), -st * math.cos(phi)


def _env_eval(img, h, w, u, v):
    fu = u * w - 0.5
    fv = v * h - 0.5
    iu = math.floor(fu)
    jv = math.floor(fv)
    du = fu - iu
    dv = fv - jv
    i0 = int(iu) % w
    if i0 < 0:
        i0 += w
    i1 = i0 + 1
    if i1 == w:
        i1 = 0
    j0 = int(jv)
    if j0 < 0:
        j0 = 0
    if j0 > h - 1:
        j0 = h - 1
    j1 = j0 + 1
    if j1 > h - 1:
        j1 = h - 1
    w00 = (1.0 - du) * (1.0 - dv)
    w10 = du * (1.0 - dv)
    w01 = (1.0 - du) * dv
    w11 = du * dv
    a = img[j0][i0]
    b = img[j0][i1]
    c = img[j1][i0]
    e = img[j1][i1]
    return (w00 * a[0] + w10 * b[0] + w01 * c[0] + w11 * e[0],
            w00 * a[1] + w10 * b[1] + w01 * c[1] + w11 * e[1],
            w00 * a[2] + w10 * b[2] + w01 * c[2] + w11 * e[2])


def _search_cdf(cdf, n, xi):
    lo = 0
    hi = n - 1
    while lo < hi:
        mid = (lo + hi) >> 1
        if cdf[mid] > xi:
            hi = mid
        else:
            lo = mid + 1
    return lo


def _env_pdf_dir(env_pdf, h, w, u, v):
    st = math.sin(v * math.pi)
    if st <= 1e-9:
        return 0.0
    i = int(u * w)
    if i > w - 1:
        i = w - 1
    j = int(v * h)
    if j > h - 1:
        j = h - 1
    return env_pdf[j][i] * INV_2PI2 / st


def render_path_rows(nbounds, nchild, ncount, naxis, prim,
                     tv0, te1, te2, tgn, tn0, tn1, tn2, tuv0, tuv1, tuv2,
                     tri_mat, tri_block,
                     mat_diffuse, mat_alpha, mat_emission, mat_two, mat_tex,
                     tex_data, tex_off, tex_w, tex_h,
                     em_tri, em_cdf, em_pdf_area,
                     env_img, env_marg, env_cond, env_pdf,
                     cam, spp, max_depth, rr_start, seed, indoor_on, env_on,
                     out, row0, row1):
    v = _View(nbounds, nchild, ncount, naxis, prim, tv0, te1, te2, tri_block)
    gn = tgn.tolist()
    n0 = tn0.tolist()
    n1 = tn1.tolist()
    n2 = tn2.tolist()
    uv0 = tuv0.tolist()
    uv1 = tuv1.tolist()
    uv2 = tuv2.tolist()
    tmat = tri_mat.tolist()
    mdiff = mat_diffuse.tolist()
    malpha = mat_alpha.tolist()
    memit = mat_emission.tolist()
    mtwo = mat_two.tolist()
    mtex = mat_tex.tolist()
    texd = tex_data.tolist()
    texo = tex_off.tolist()
    texw = tex_w.tolist()
    texh = tex_h.tolist()
    emtri = em_tri.tolist()
    emcdf = em_cdf.tolist()
    empdf = em_pdf_area.tolist()
    eimg = env_img.tolist()
    emarg = env_marg.tolist()
    econd = env_cond.tolist()
    epdf = env_pdf.tolist()
    eh = len(eimg)
    ew = len(eimg[0])
    n_em = len(emtri)
    c = cam.tolist()
    height = out.shape[0]
    width = out.shape[1]
    inv_pi = 1.0 / math.pi
    nan_count = 0

    for y in range(row0, row1):
        ndc_y = 1.0 - ((y + 0.5) / height) * 2.0
        for x in range(width):
            ndc_x = ((x + 0.5) / width) * 2.0 - 1.0
            # primary direction: forward + ndc_x*tanx*right + ndc_y*tany*up
            pdx = c[9] + ndc_x * c[12] * c[3] + ndc_y * c[13] * c[6]
            pdy = c[10] + ndc_x * c[12] * c[4] + ndc_y * c[13] * c[7]
            pdz = c[11] + ndc_x * c[12] * c[5] + ndc_y * c[13] * c[8]
            plen = math.sqrt(pdx * pdx + pdy * pdy + pdz * pdz)
            pdx /= plen
            pdy /= plen
            pdz /= plen
            accr = 0.0
            accg = 0.0
            accb = 0.0
            for s in range(spp):
                state = _rng_state(seed, x, y, s)
                ox, oy, oz = c[0], c[1], c[2]
                dx, dy, dz = pdx, pdy, pdz
                lr = lg = lb = 0.0
                br = bg = bb = 1.0
                prev_pdf = 0.0
                from_camera = True
                depth = 0
                passes = 0
                light_probe = False
                while True:
                    tri, t, hu, hv = _traverse_nearest(v, ox, oy, oz, dx, dy, dz,
                                                       EPS, INF)
                    if tri < 0:
                        if env_on:
                            eu, ev = _env_uv(dx, dy, dz)
                            er, eg, eb = _env_eval(eimg, eh, ew, eu, ev)
                            if from_camera:
                                w = 1.0
                            else:
                                pe = _env_pdf_dir(epdf, eh, ew, eu, ev)
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
                    g = gn[tri]
                    gx, gy, gz = g[0], g[1], g[2]
                    front = (dx * gx + dy * gy + dz * gz) < 0.0
                    two = mtwo[mi]
                    if two and not front:
                        gx = -gx
                        gy = -gy
                        gz = -gz
                    w0 = 1.0 - hu - hv
                    a0 = n0[tri]
                    a1 = n1[tri]
                    a2 = n2[tri]
                    snx = w0 * a0[0] + hu * a1[0] + hv * a2[0]
                    sny = w0 * a0[1] + hu * a1[1] + hv * a2[1]
                    snz = w0 * a0[2] + hu * a1[2] + hv * a2[2]
                    sl = math.sqrt(snx * snx + sny * sny + snz * snz)
                    if sl == 0.0:
                        snx, sny, snz = gx, gy, gz
                    else:
                        snx /= sl
                        sny /= sl
                        snz /= sl
                        if snx * gx + sny * gy + snz * gz < 0.0:
                            snx = -snx
                            sny = -sny
                            snz = -snz
                    em = memit[mi]
                    if indoor_on and (em[0] > 0.0 or em[1] > 0.0 or em[2] > 0.0):
                        if front or two:
                            if from_camera:
                                w = 1.0
                            else:
                                pla = empdf[tri]
                                if pla > 0.0:
                                    cosl = dx * g[0] + dy * g[1] + dz * g[2]
                                    if cosl < 0.0:
                                        cosl = -cosl
                                    if cosl > 1e-9:
                                        pl = pla * (t * t) / cosl
                                        w = prev_pdf * prev_pdf / (prev_pdf * prev_pdf + pl * pl)
                                    else:
                                        w = 1.0
                                else:
                                    w = 1.0
                            lr += br * em[0] * w
                            lg += bg * em[1] * w
                            lb += bb * em[2] * w
                    if light_probe:
                        # final MIS-completion segment: emission/env only
                        break
                    # albedo (texture or constant diffuse)
                    ti = mtex[mi]
                    if ti >= 0:
                        u0 = uv0[tri]
                        u1 = uv1[tri]
                        u2 = uv2[tri]
                        tu = w0 * u0[0] + hu * u1[0] + hv * u2[0]
                        tv = w0 * u0[1] + hu * u1[1] + hv * u2[1]
                        tw = texw[ti]
                        th = texh[ti]
                        fi = int(math.floor(tu * tw)) % tw
                        if fi < 0:
                            fi += tw
                        fj = int(math.floor(tv * th)) % th
                        if fj < 0:
                            fj += th
                        base = texo[ti] + (fj * tw + fi) * 3
                        alr = texd[base]
                        alg = texd[base + 1]
                        alb = texd[base + 2]
                    else:
                        md = mdiff[mi]
                        alr, alg, alb = md[0], md[1], md[2]
                    # NEE: area emitters
                    if indoor_on and n_em > 0:
                        state, xi = _rng_next(state)
                        state, xi2 = _rng_next(state)
                        state, xi3 = _rng_next(state)
                        le_idx = _search_cdf(emcdf, n_em, xi)
                        lt = emtri[le_idx]
                        su = math.sqrt(xi2)
                        ba = su * (1.0 - xi3)
                        bb_ = su * xi3
                        lv0 = v.tv0[lt]
                        le1 = v.te1[lt]
                        le2 = v.te2[lt]
                        lpx = lv0[0] + ba * le1[0] + bb_ * le2[0]
                        lpy = lv0[1] + ba * le1[1] + bb_ * le2[1]
                        lpz = lv0[2] + ba * le1[2] + bb_ * le2[2]
                        wix = lpx - px
                        wiy = lpy - py
                        wiz = lpz - pz
                        d2 = wix * wix + wiy * wiy + wiz * wiz
                        dist = math.sqrt(d2)
                        if dist > 4.0 * EPS:
                            wix /= dist
                            wiy /= dist
                            wiz /= dist
                            cos_s = snx * wix + sny * wiy + snz * wiz
                            ln = gn[lt]
                            cos_l = -(wix * ln[0] + wiy * ln[1] + wiz * ln[2])
                            lmat = tmat[lt]
                            if mtwo[lmat] and cos_l < 0.0:
                                cos_l = -cos_l
                            if cos_s > 0.0 and cos_l > 1e-9:
                                if not _traverse_blocked(v, px, py, pz,
                                                         wix, wiy, wiz,
                                                         EPS, dist - EPS):
                                    pla = empdf[lt]
                                    pl = pla * d2 / cos_l
                                    pb = cos_s * inv_pi
                                    w = pl * pl / (pl * pl + pb * pb)
                                    lem = memit[lmat]
                                    scale = cos_s * cos_l / (d2 * pla) * inv_pi * w
                                    lr += br * alr * lem[0] * scale
                                    lg += bg * alg * lem[1] * scale
                                    lb += bb * alb * lem[2] * scale
                    # NEE: environment
                    if env_on:
                        state, xi = _rng_next(state)
                        state, xi2 = _rng_next(state)
                        j = _search_cdf(emarg, eh, xi)
                        lo = emarg[j - 1] if j > 0 else 0.0
                        seg = emarg[j] - lo
                        fj = (xi - lo) / seg if seg > 0.0 else 0.5
                        ev = (j + fj) / eh
                        row = econd[j]
                        i = _search_cdf(row, ew, xi2)
                        lo2 = row[i - 1] if i > 0 else 0.0
                        seg2 = row[i] - lo2
                        fi = (xi2 - lo2) / seg2 if seg2 > 0.0 else 0.5
                        eu = (i + fi) / ew
                        wix, wiy, wiz = _env_dir(eu, ev)
                        cos_s = snx * wix + sny * wiy + snz * wiz
                        if cos_s > 0.0:
                            st = math.sin(ev * math.pi)
                            if st > 1e-9:
                                pe = epdf[j][i] * INV_2PI2 / st
                                if pe > 0.0:
                                    if not _traverse_blocked(v, px, py, pz,
                                                             wix, wiy, wiz,
                                                             EPS, INF):
                                        er, eg2, eb2 = _env_eval(eimg, eh, ew, eu, ev)
                                        pb = cos_s * inv_pi
                                        w = pe * pe / (pe * pe + pb * pb)
                                        scale = cos_s / pe * inv_pi * w
                                        lr += br * alr * er * scale
                                        lg += bg * alg * eg2 * scale
                                        lb += bb * alb * eb2 * scale
                    depth += 1
                    if depth >= max_depth:
                        # scatter once more as a light probe so the BSDF half
                        # of the MIS pair completes the direct estimator
                        light_probe = True
                    # cosine-weighted scatter around the shading normal
                    state, xi = _rng_next(state)
                    state, xi2 = _rng_next(state)
                    r_ = math.sqrt(xi)
                    phi = 2.0 * math.pi * xi2
                    lx = r_ * math.cos(phi)
                    ly = r_ * math.sin(phi)
                    lz = math.sqrt(1.0 - xi)
                    if lz <= 0.0:
                        break
                    if -0.9 < sny < 0.9:
                        hx, hy, hz = 0.0, 1.0, 0.0
                    else:
                        hx, hy, hz = 1.0, 0.0, 0.0
                    txx = hy * snz - hz * sny
                    txy = hz * snx - hx * snz
                    txz = hx * sny - hy * snx
                    tl = math.sqrt(txx * txx + txy * txy + txz * txz)
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
                    from_camera = False
                    if depth >= rr_start and not light_probe:
                        q = br
                        if bg > q:
                            q = bg
                        if bb > q:
                            q = bb
                        if q > 0.95:
                            q = 0.95
                        if q < 0.05:
                            q = 0.05
                        state, xi = _rng_next(state)
                        if xi >= q:
                            break
                        br /= q
                        bg /= q
                        bb /= q
                    ox, oy, oz = px, py, pz
                if lr != lr or lg != lg or lb != lb:
                    nan_count += 1
                else:
                    accr += lr
                    accg += lg
                    accb += lb
            out[y, x, 0] = accr / spp
            out[y, x, 1] = accg / spp
            out[y, x, 2] = accb / spp
    return nan_count
