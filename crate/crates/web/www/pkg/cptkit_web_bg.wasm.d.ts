/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_curve_free: (a: number, b: number) => void;
export const cpt_spectrum: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const curve_x: (a: number) => [number, number];
export const curve_y: (a: number) => [number, number];
export const d_broadening: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
export const g2_curve: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
