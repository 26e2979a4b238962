// Structured action entry: compose canonical func(args) strings from the
// palette the server sent for this role. Free-text entry is deliberately
// not offered, so a human trial measures collaboration, not syntax.

import type { Palette, PaletteFunction } from './protocol'

export function findFunction(palette: Palette, name: string): PaletteFunction | undefined {
  return palette.functions.find((f) => f.name === name)
}

export function canonicalCall(name: string, args: string[]): string {
  return `${name}(${args.join(',')})`
}

export function requestCall(inner: string): string {
  return `request('${inner}')`
}

/** Compose one palette pick into a canonical action string.
 *  Throws when the function is not offered to this role or an argument
 *  falls outside the server-provided choices - such a combination must be
 *  impossible to submit. */
export function composeAction(palette: Palette, name: string, args: string[]): string {
  const fn = findFunction(palette, name)
  if (!fn) {
    throw new Error(`'${name}' is not in this role's action space`)
  }
  if (args.length !== fn.arity) {
    throw new Error(`'${name}' takes ${fn.arity} argument(s), got ${args.length}`)
  }
  args.forEach((arg, i) => {
    const options = fn.arg_options[i] ?? []
    if (options.length > 0 && !options.includes(arg)) {
      throw new Error(`'${arg}' is not a valid argument ${i + 1} for '${name}'`)
    }
  })
  return canonicalCall(name, args)
}

/** Compose a collaborative request for a teammate-owned action. */
export function composeRequest(palette: Palette, name: string, args: string[]): string {
  if (!palette.requestable.includes(name)) {
    throw new Error(`'${name}' cannot be requested from the teammate`)
  }
  return requestCall(canonicalCall(name, args))
}

export function joinPlan(actions: string[]): string {
  return actions.join('; ')
}
