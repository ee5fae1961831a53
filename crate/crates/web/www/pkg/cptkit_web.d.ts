/* tslint:disable */
/* eslint-disable */

/**
 * Sampled curve handed to JavaScript as two `Float64Array`s.
 */
export class Curve {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly x: Float64Array;
    readonly y: Float64Array;
}

/**
 * Excited-state population against the D-laser detuning (Hz) at Δ_C = 0.
 *
 * Rabi frequencies in 2π·MHz, `t_minus_ps` sets γ₋ and `gamma_deph` is in 1/s.
 */
export function cpt_spectrum(omega_c_mhz: number, omega_d_mhz: number, t_minus_ps: number, gamma_deph: number, points: number): Curve;

/**
 * D-linewidth decomposition as a JSON string. Powers in nW, widths in MHz.
 */
export function d_broadening(tau_se_ns: number, branch_ratio: number, p_c_nw: number, p_d_nw: number, p_sat_nw: number, gamma_c_mhz: number, gamma_d_mhz: number): string;

/**
 * g²(τ) over `±span_ns`, times in ns.
 */
export function g2_curve(p: number, c: number, tau_a_ns: number, tau_b_ns: number, offset_ns: number, span_ns: number, points: number): Curve;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_curve_free: (a: number, b: number) => void;
    readonly cpt_spectrum: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly curve_x: (a: number) => [number, number];
    readonly curve_y: (a: number) => [number, number];
    readonly d_broadening: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
    readonly g2_curve: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
